// SPDX-License-Identifier: Apache-2.0

#include "markboard/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "markboard/errors.hpp"
#include "markboard/losses.hpp"
#include "markboard/optim.hpp"

namespace markboard {

using json = nlohmann::ordered_json;

ModelView ModelPair::inactive_view() {
    ModelView v;
    v.topo = &topo;
    v.base = &base;
    v.lora_a = &lora_a;
    for (auto& b : clean_branches) v.branches.push_back(&b);
    v.router = &router;
    return v;
}

ModelView ModelPair::active_view() {
    ModelView v;
    v.topo = &topo;
    v.base = &base;
    v.lora_a = &lora_a;
    for (auto& b : wm_branches) v.branches.push_back(&b);
    v.router = &router;
    return v;
}

ModelView ModelPair::signature_view(const std::vector<std::uint8_t>& bits) {
    if (static_cast<int>(bits.size()) != n) {
        throw ContractError("signature_view: signature length does not match pair n");
    }
    ModelView v;
    v.topo = &topo;
    v.base = &base;
    v.lora_a = &lora_a;
    for (int i = 0; i < n; ++i) {
        v.branches.push_back(bits[static_cast<std::size_t>(i)] ? &wm_branches[static_cast<std::size_t>(i)]
                                                               : &clean_branches[static_cast<std::size_t>(i)]);
    }
    v.router = &router;
    return v;
}

std::vector<Parameter*> ModelPair::branch_params(std::vector<Parameter>& set) {
    std::vector<Parameter*> out;
    for (auto& b : set) out.push_back(&b);
    return out;
}

ModelPair init_pair(const RunConfig& config, Rng& rng) {
    config.validate();
    ModelPair pair;
    pair.topo.image_size = config.data.image_size;
    pair.topo.layer_dims = config.layer_dims();
    pair.topo.lora_layer = config.model.lora_layer;
    pair.topo.router_hidden = config.model.router_hidden;
    pair.topo.validate();
    pair.n = config.model.bits;
    pair.rank = config.model.rank;
    pair.base = init_base_layers(pair.topo, rng);
    pair.lora_a = init_lora_a(pair.rank, pair.topo.lora_out(), rng);
    pair.clean_branches = init_branches(pair.n, pair.topo.lora_in(), pair.rank);
    pair.router = Router::init(pair.topo.lora_in(), pair.topo.router_hidden, pair.n, rng);
    pair.triggers = make_trigger_specs(pair.n, config.data.image_size, config.trigger.patch,
                                       config.trigger.value, config.data.classes);
    pair.config = config;
    return pair;
}

DatasetBundle make_bundle_from_config(const RunConfig& config) {
    Rng rng_data(config.seed, 1);
    Rng rng_bundle(config.seed, 2);
    const Tensor protos = make_blob_prototypes(config.data.classes, config.data.image_size, rng_data);
    LabeledSet train = sample_blobs(protos, config.data.image_size, config.data.train_per_class,
                                    config.data.noise_sigma, config.data.border_sigma, rng_data);
    LabeledSet test = sample_blobs(protos, config.data.image_size, config.data.test_per_class,
                                   config.data.noise_sigma, config.data.border_sigma, rng_data);
    auto specs = make_trigger_specs(config.model.bits, config.data.image_size, config.trigger.patch,
                                    config.trigger.value, config.data.classes);
    return build_bundle(std::move(train), std::move(test), specs, config.data.image_size,
                        config.train.wm_ratio, config.policy.probe_count, rng_bundle);
}

double clean_accuracy(const ModelView& view, const LabeledSet& set) {
    return accuracy(model_forward(view, set.inputs), set.labels);
}

double route_accuracy(const ModelView& view, const DatasetBundle& bundle,
                      const std::vector<int>& skip_bits) {
    std::size_t total = 0, hits = 0;
    for (const auto& set : bundle.wm_test) {
        if (std::find(skip_bits.begin(), skip_bits.end(), set.bit) != skip_bits.end()) continue;
        Tensor probs = route(*view.router, lora_layer_input(view, set.inputs));
        for (int pred : argmax_rows(probs)) {
            ++total;
            hits += (pred == set.bit);
        }
    }
    if (total == 0) return 1.0;
    return static_cast<double>(hits) / static_cast<double>(total);
}

double bit_success(const ModelView& view, const TriggerBank& bank, int bit) {
    if (bit < 0 || bit >= bank.n()) throw DomainError("bit_success: bit out of range");
    const Tensor logits = model_forward(view, bank.probes[static_cast<std::size_t>(bit)]);
    std::size_t hits = 0;
    const auto preds = argmax_rows(logits);
    for (int p : preds) hits += (p == bank.targets[static_cast<std::size_t>(bit)]);
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double branch_alignment_mse(ModelView fprime, ModelView f, const Tensor& clean_inputs) {
    Tensor h = lora_layer_input(fprime, clean_inputs);
    double total = 0.0;
    for (int j = 0; j < fprime.n(); ++j) {
        Tensor a = matmul(matmul(h, fprime.branches[static_cast<std::size_t>(j)]->value),
                          fprime.lora_a->value);
        Tensor b = matmul(matmul(h, f.branches[static_cast<std::size_t>(j)]->value), f.lora_a->value);
        double acc = 0.0;
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
            acc += d * d;
        }
        total += acc / static_cast<double>(a.data.size());
    }
    return total / fprime.n();
}

double clean_route_drift(const ModelView& view, const Router& anchor, const Tensor& clean_inputs) {
    Tensor h = lora_layer_input(view, clean_inputs);
    Tensor now = route(*view.router, h);
    Tensor then = route(anchor, h);
    double total = 0.0;
    for (std::size_t i = 0; i < now.data.size(); ++i) {
        total += std::abs(static_cast<double>(now.data[i]) - static_cast<double>(then.data[i]));
    }
    return total / now.rows();
}

namespace {

std::vector<int> shuffled_indices(int count, Rng& rng) {
    std::vector<int> order(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    return order;
}

// Cycles clean training data in shuffled minibatches, reshuffling at wrap.
class CleanBatcher {
public:
    CleanBatcher(const LabeledSet& set, int batch, Rng& rng)
        : set_(set), batch_(std::min(batch, set.size())), rng_(rng), order_(shuffled_indices(set.size(), rng)) {}

    LabeledSet next() {
        std::vector<int> idx;
        idx.reserve(static_cast<std::size_t>(batch_));
        for (int i = 0; i < batch_; ++i) {
            if (pos_ == order_.size()) {
                rng_.shuffle(order_);
                pos_ = 0;
            }
            idx.push_back(order_[pos_++]);
        }
        return set_.subset(idx);
    }

private:
    const LabeledSet& set_;
    int batch_;
    Rng& rng_;
    std::vector<int> order_;
    std::size_t pos_ = 0;
};

struct PoolEntry {
    int set;
    int row;
};

std::vector<PoolEntry> make_pool(const DatasetBundle& bundle, const std::vector<int>& skip_bits) {
    std::vector<PoolEntry> pool;
    for (std::size_t s = 0; s < bundle.wm_train.size(); ++s) {
        const auto& set = bundle.wm_train[s];
        if (std::find(skip_bits.begin(), skip_bits.end(), set.bit) != skip_bits.end()) continue;
        for (int r = 0; r < set.size(); ++r) pool.push_back({static_cast<int>(s), r});
    }
    return pool;
}

TriggeredBatch gather(const DatasetBundle& bundle, const std::vector<PoolEntry>& pool,
                      std::size_t begin, std::size_t end) {
    const int d = bundle.clean_train.inputs.cols();
    TriggeredBatch batch;
    batch.inputs = Tensor::zeros({static_cast<int>(end - begin), d});
    for (std::size_t i = begin; i < end; ++i) {
        const auto& set = bundle.wm_train[static_cast<std::size_t>(pool[i].set)];
        std::copy_n(&set.inputs.data[static_cast<std::size_t>(pool[i].row) * d], d,
                    &batch.inputs.data[(i - begin) * static_cast<std::size_t>(d)]);
        batch.bits.push_back(set.bit);
        batch.targets.push_back(set.target);
    }
    return batch;
}

TriggeredBatch filter_bits(const TriggeredBatch& batch, const std::vector<int>& skip_bits) {
    std::vector<int> keep;
    for (std::size_t i = 0; i < batch.bits.size(); ++i) {
        if (std::find(skip_bits.begin(), skip_bits.end(), batch.bits[i]) == skip_bits.end()) {
            keep.push_back(static_cast<int>(i));
        }
    }
    TriggeredBatch out;
    if (keep.empty()) return out;
    const int d = batch.inputs.cols();
    out.inputs = Tensor::zeros({static_cast<int>(keep.size()), d});
    for (std::size_t i = 0; i < keep.size(); ++i) {
        std::copy_n(&batch.inputs.data[static_cast<std::size_t>(keep[i]) * d], d,
                    &out.inputs.data[i * static_cast<std::size_t>(d)]);
        out.bits.push_back(batch.bits[static_cast<std::size_t>(keep[i])]);
        out.targets.push_back(batch.targets[static_cast<std::size_t>(keep[i])]);
    }
    return out;
}

void check_params_finite(const std::vector<Parameter*>& params, const std::string& phase) {
    for (const Parameter* p : params) check_finite(p->value, phase + " parameters");
}

void emit(const MetricsSink& sink, const json& record) {
    if (sink) sink(record.dump());
}

}  // namespace

void pretrain_base(ModelPair& pair, const DatasetBundle& bundle, Rng& rng, const MetricsSink& sink) {
    const TrainPhases& cfg = pair.config.train;
    std::vector<Parameter*> params;
    for (auto& layer : pair.base) {
        params.push_back(&layer.weight);
        params.push_back(&layer.bias);
    }
    for (Parameter* p : params) p->zero_grad();
    Optimizer opt(params, {OptimizerKind::adam, cfg.lr});
    for (int epoch = 0; epoch < cfg.epochs_base; ++epoch) {
        auto order = shuffled_indices(bundle.clean_train.size(), rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
            LabeledSet b = bundle.clean_train.subset(
                std::vector<int>(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                 order.begin() + static_cast<std::ptrdiff_t>(end)));
            Tape tape;
            Var loss = cross_entropy_logits(mlp_forward(tape, pair.base, b.inputs), b.labels);
            backward(loss, tape);
            opt.step();
            loss_sum += static_cast<double>(loss->value.data[0]) * static_cast<double>(end - pos);
            seen += end - pos;
        }
        emit(sink, {{"phase", "base"},
                    {"epoch", epoch},
                    {"loss", loss_sum / static_cast<double>(seen)},
                    {"clean_acc", clean_accuracy(pair.inactive_view(), bundle.clean_test)}});
    }
    for (Parameter* p : params) p->frozen = true;
    check_params_finite(params, "pretrain_base");
}

void train_inactive(ModelPair& pair, const DatasetBundle& bundle, Rng& rng, const MetricsSink& sink) {
    const TrainPhases& cfg = pair.config.train;
    std::vector<Parameter*> params = {&pair.lora_a};
    for (auto* p : pair.branch_params(pair.clean_branches)) params.push_back(p);
    for (auto* p : pair.router.params()) params.push_back(p);
    for (Parameter* p : params) p->zero_grad();
    Optimizer opt(params, {OptimizerKind::adam, cfg.lr});
    ModelView view = pair.inactive_view();
    double acc = clean_accuracy(view, bundle.clean_test);
    for (int epoch = 0; epoch < cfg.epochs_inactive; ++epoch) {
        auto order = shuffled_indices(bundle.clean_train.size(), rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
            LabeledSet b = bundle.clean_train.subset(
                std::vector<int>(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                 order.begin() + static_cast<std::ptrdiff_t>(end)));
            Tape tape;
            Var loss = loss_utility(tape, view, b.inputs, b.labels);
            backward(loss, tape);
            opt.step();
            loss_sum += static_cast<double>(loss->value.data[0]) * static_cast<double>(end - pos);
            seen += end - pos;
        }
        acc = clean_accuracy(view, bundle.clean_test);
        emit(sink, {{"phase", "inactive"},
                    {"epoch", epoch},
                    {"loss", loss_sum / static_cast<double>(seen)},
                    {"clean_acc", acc}});
    }
    pair.lora_a.frozen = true;
    for (auto& b : pair.clean_branches) b.frozen = true;
    check_params_finite(params, "train_inactive");
    if (cfg.epochs_inactive > 0 && acc < cfg.accuracy_floor) {
        throw TrainingFailure("train_inactive: held-out accuracy " + std::to_string(acc) +
                              " below floor " + std::to_string(cfg.accuracy_floor));
    }
}

Router copy_inactive_to_active(ModelPair& pair) {
    pair.wm_branches.clear();
    for (const auto& b : pair.clean_branches) {
        Parameter copy(b.value);
        pair.wm_branches.push_back(std::move(copy));
    }
    Router anchor;
    anchor.w1 = Parameter(pair.router.w1.value, true);
    anchor.b1 = Parameter(pair.router.b1.value, true);
    anchor.w2 = Parameter(pair.router.w2.value, true);
    anchor.b2 = Parameter(pair.router.b2.value, true);
    return anchor;
}

void warmup_router(ModelPair& pair, const DatasetBundle& bundle, const Router& anchor, Rng& rng,
                   const MetricsSink& sink) {
    const TrainPhases& cfg = pair.config.train;
    const auto& skip = cfg.route_loss_disabled_bits;
    auto pool = make_pool(bundle, skip);
    if (pool.empty() && cfg.epochs_warmup > 0) {
        emit(sink, {{"phase", "warmup"}, {"note", "route loss disabled for all bits"}});
        return;
    }
    std::vector<Parameter*> params = pair.router.params();
    for (Parameter* p : params) p->zero_grad();
    Optimizer opt(params, {OptimizerKind::adam, cfg.lr});
    ModelView view = pair.active_view();
    CleanBatcher clean(bundle.clean_train, cfg.batch_size, rng);
    double racc = 0.0;
    for (int epoch = 0; epoch < cfg.epochs_warmup; ++epoch) {
        rng.shuffle(pool);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t pos = 0; pos < pool.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(pool.size(), pos + static_cast<std::size_t>(cfg.batch_size));
            TriggeredBatch tb = gather(bundle, pool, pos, end);
            Tape tape;
            Var loss = loss_route(tape, view, tb);
            if (cfg.route_consistency_weight > 0.0f) {
                LabeledSet cb = clean.next();
                Tensor anchor_probs = route(anchor, lora_layer_input(view, cb.inputs));
                loss = add(loss, scale(route_consistency(tape, view, cb.inputs, anchor_probs),
                                       cfg.route_consistency_weight));
            }
            backward(loss, tape);
            opt.step();
            loss_sum += static_cast<double>(loss->value.data[0]) * static_cast<double>(end - pos);
            seen += end - pos;
        }
        racc = route_accuracy(view, bundle, skip);
        emit(sink, {{"phase", "warmup"},
                    {"epoch", epoch},
                    {"loss", loss_sum / static_cast<double>(seen)},
                    {"route_acc", racc},
                    {"clean_route_drift", clean_route_drift(view, anchor, bundle.clean_test.inputs)}});
    }
    check_params_finite(params, "warmup_router");
    if (cfg.epochs_warmup > 0 && racc < cfg.route_accuracy_floor) {
        throw TrainingFailure("warmup_router: route accuracy " + std::to_string(racc) +
                              " below floor " + std::to_string(cfg.route_accuracy_floor));
    }
}

void train_active(ModelPair& pair, const DatasetBundle& bundle, const Router& anchor, Rng& rng,
                  const MetricsSink& sink) {
    const TrainPhases& cfg = pair.config.train;
    const auto& skip = cfg.route_loss_disabled_bits;
    auto pool = make_pool(bundle, {});
    std::vector<Parameter*> params = pair.branch_params(pair.wm_branches);
    for (auto* p : pair.router.params()) params.push_back(p);
    for (Parameter* p : params) p->zero_grad();
    Optimizer opt(params, {OptimizerKind::adam, cfg.lr});
    ModelView active = pair.active_view();
    ModelView inactive = pair.inactive_view();
    CleanBatcher clean(bundle.clean_train, cfg.batch_size, rng);
    const TriggerBank bank = pair.bank.n() ? pair.bank : bank_from_bundle(bundle);
    for (int epoch = 0; epoch < cfg.epochs_active; ++epoch) {
        rng.shuffle(pool);
        double wm_sum = 0.0, route_sum = 0.0, align_sum = 0.0, rc_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t pos = 0; pos < pool.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(pool.size(), pos + static_cast<std::size_t>(cfg.batch_size));
            TriggeredBatch tb = gather(bundle, pool, pos, end);
            Tape tape;
            Var wm = loss_wm(tape, active, tb);
            Var total = wm;
            wm_sum += static_cast<double>(wm->value.data[0]) * static_cast<double>(end - pos);
            TriggeredBatch routed = filter_bits(tb, skip);
            if (!routed.bits.empty()) {
                Var rt = loss_route(tape, active, routed);
                total = add(total, rt);
                route_sum += static_cast<double>(rt->value.data[0]) * static_cast<double>(end - pos);
            }
            LabeledSet cb = clean.next();
            if (cfg.align_weight > 0.0f) {
                Var al = loss_align(tape, active, inactive, cb.inputs);
                total = add(total, scale(al, cfg.align_weight));
                align_sum += static_cast<double>(al->value.data[0]) * static_cast<double>(end - pos);
            }
            if (cfg.route_consistency_weight > 0.0f) {
                Tensor anchor_probs = route(anchor, lora_layer_input(active, cb.inputs));
                Var rc = route_consistency(tape, active, cb.inputs, anchor_probs);
                total = add(total, scale(rc, cfg.route_consistency_weight));
                rc_sum += static_cast<double>(rc->value.data[0]) * static_cast<double>(end - pos);
            }
            backward(total, tape);
            opt.step();
            seen += end - pos;
        }
        double min_success = 1.0;
        for (int bit = 0; bit < pair.n; ++bit) {
            min_success = std::min(min_success, bit_success(active, bank, bit));
        }
        emit(sink, {{"phase", "active"},
                    {"epoch", epoch},
                    {"loss_wm", wm_sum / static_cast<double>(seen)},
                    {"loss_route", route_sum / static_cast<double>(seen)},
                    {"loss_align", align_sum / static_cast<double>(seen)},
                    {"route_consistency", rc_sum / static_cast<double>(seen)},
                    {"clean_acc", clean_accuracy(active, bundle.clean_test)},
                    {"min_bit_success", min_success}});
    }
    check_params_finite(params, "train_active");
    if (cfg.epochs_active > 0) {
        for (int bit = 0; bit < pair.n; ++bit) {
            const double s = bit_success(active, bank, bit);
            if (s < cfg.bit_success_floor) {
                throw TrainingFailure("train_active: bit " + std::to_string(bit) + " trigger success " +
                                      std::to_string(s) + " below floor " +
                                      std::to_string(cfg.bit_success_floor));
            }
        }
    }
}

ModelPair train_pair(const RunConfig& config, const MetricsSink& sink, DatasetBundle* out_bundle) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng_init(config.seed, 0);
    Rng rng_train(config.seed, 3);
    ModelPair pair = init_pair(config, rng_init);
    DatasetBundle bundle = make_bundle_from_config(config);
    pair.bank = bank_from_bundle(bundle);

    pretrain_base(pair, bundle, rng_train, sink);
    train_inactive(pair, bundle, rng_train, sink);
    Router anchor = copy_inactive_to_active(pair);
    warmup_router(pair, bundle, anchor, rng_train, sink);
    train_active(pair, bundle, anchor, rng_train, sink);

    for (auto& b : pair.wm_branches) b.frozen = true;
    for (auto* p : pair.router.params()) p->frozen = true;

    const auto t1 = std::chrono::steady_clock::now();
    pair.train_seconds = std::chrono::duration<double>(t1 - t0).count();
    emit(sink, {{"phase", "done"},
                {"train_seconds", pair.train_seconds},
                {"clean_acc_inactive", clean_accuracy(pair.inactive_view(), bundle.clean_test)},
                {"clean_acc_active", clean_accuracy(pair.active_view(), bundle.clean_test)},
                {"align_mse", branch_alignment_mse(pair.active_view(), pair.inactive_view(),
                                                   bundle.clean_test.inputs)}});
    if (out_bundle) *out_bundle = std::move(bundle);
    return pair;
}

}  // namespace markboard
