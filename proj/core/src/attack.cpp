// SPDX-License-Identifier: Apache-2.0

#include "markboard/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "markboard/autodiff.hpp"
#include "markboard/errors.hpp"
#include "markboard/optim.hpp"

namespace markboard {

using json = nlohmann::ordered_json;

DistributedModel escape_attack(const DistributedModel& model) {
    DistributedModel stripped = model;
    stripped.lora_enabled = false;
    stripped.deltas.clear();
    stripped.n = 0;
    return stripped;
}

DistributedModel collusion_swap(const DistributedModel& a, const DistributedModel& b,
                                const std::vector<int>& branch_indices) {
    if (a.topo != b.topo || a.n != b.n) {
        throw DimensionError("collusion_swap: models have different topology or branch count");
    }
    DistributedModel hybrid = a;
    for (int idx : branch_indices) {
        if (idx < 0 || idx >= a.n) throw DomainError("collusion_swap: branch index out of range");
        hybrid.deltas[static_cast<std::size_t>(idx)].value =
            b.deltas[static_cast<std::size_t>(idx)].value;
    }
    return hybrid;
}

DistributedModel prune_model(const DistributedModel& model, double rate) {
    if (rate < 0.0 || rate >= 1.0) throw DomainError("prune: rate must be in [0,1)");
    DistributedModel pruned = model;
    if (rate == 0.0) return pruned;

    std::vector<Parameter*> params = pruned.all_params();
    std::size_t total = 0;
    for (const Parameter* p : params) total += p->value.size();
    const std::size_t budget = static_cast<std::size_t>(std::floor(rate * static_cast<double>(total)));
    if (budget == 0) return pruned;

    std::vector<float> magnitudes;
    magnitudes.reserve(total);
    for (const Parameter* p : params) {
        for (float v : p->value.data) magnitudes.push_back(std::abs(v));
    }
    std::nth_element(magnitudes.begin(), magnitudes.begin() + static_cast<std::ptrdiff_t>(budget - 1),
                     magnitudes.end());
    const float threshold = magnitudes[budget - 1];

    // Zero strictly-below first, then spend the remaining budget on threshold
    // ties in deterministic tensor/index order.
    std::size_t zeroed = 0;
    for (Parameter* p : params) {
        for (float& v : p->value.data) {
            if (std::abs(v) < threshold) {
                v = 0.0f;
                ++zeroed;
            }
        }
    }
    for (Parameter* p : params) {
        if (zeroed >= budget) break;
        for (float& v : p->value.data) {
            if (zeroed >= budget) break;
            if (v != 0.0f && std::abs(v) == threshold) {
                v = 0.0f;
                ++zeroed;
            }
        }
    }
    return pruned;
}

DistributedModel finetune_model(const DistributedModel& model, const LabeledSet& clean_train,
                                double fraction, int epochs, const TrainPhases& hp,
                                std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0) throw DomainError("finetune: fraction must be in (0,1]");
    DistributedModel tuned = model;
    if (epochs == 0) return tuned;

    Rng rng(seed, 7);
    std::vector<int> order(static_cast<std::size_t>(clean_train.size()));
    for (int i = 0; i < clean_train.size(); ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    const int subset_size = std::max(1, static_cast<int>(std::floor(fraction * clean_train.size())));
    order.resize(static_cast<std::size_t>(subset_size));
    LabeledSet subset = clean_train.subset(order);

    std::vector<Parameter*> params = tuned.all_params();
    for (Parameter* p : params) {
        p->frozen = false;  // attacker view: everything trainable
        p->zero_grad();
    }
    Optimizer opt(params, {OptimizerKind::adam, hp.lr});
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<int> idx(static_cast<std::size_t>(subset.size()));
        for (int i = 0; i < subset.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
        rng.shuffle(idx);
        for (std::size_t pos = 0; pos < idx.size(); pos += static_cast<std::size_t>(hp.batch_size)) {
            const std::size_t end = std::min(idx.size(), pos + static_cast<std::size_t>(hp.batch_size));
            LabeledSet b = subset.subset(std::vector<int>(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                                                          idx.begin() + static_cast<std::ptrdiff_t>(end)));
            Tape tape;
            Var loss = cross_entropy_logits(distributed_forward(tape, tuned, b.inputs), b.labels);
            backward(loss, tape);
            opt.step();
        }
    }
    return tuned;
}

EvalResult evaluate(const ForwardFn& model, const LabeledSet& clean_test, const TriggerBank& bank,
                    const SignatureRegistry& registry, const VerificationPolicy& policy,
                    const std::string& true_user) {
    const MintRecord* record = registry.find_user(true_user);
    if (!record) throw DomainError("evaluate: user not in registry: " + true_user);
    EvalResult result;
    result.cdp = accuracy(model(clean_test.inputs), clean_test.labels);
    result.extracted = extract_signature(model, bank, policy);
    result.bit_acc = static_cast<double>(match_score(result.extracted, record->signature.bits)) /
                     static_cast<double>(record->signature.n());
    const Attribution who = attribute(result.extracted, registry);
    result.attributed_user = who.user;
    result.id_acc = (!who.ambiguous && who.user == true_user) ? 1 : 0;
    return result;
}

std::string AttackReport::to_json() const {
    json doc;
    doc["attack"] = kind;
    doc["params"] = params;
    doc["cdp_before"] = cdp_before;
    doc["cdp_after"] = cdp_after;
    doc["bit_acc"] = bit_acc;
    doc["id_acc"] = id_acc;
    doc["extracted"] = extracted;
    doc["notes"] = notes;
    return doc.dump(2) + "\n";
}

std::string AttackReport::csv_header() { return "attack,param,cdp,bit_acc,id_acc"; }

std::string AttackReport::to_csv_row(const std::string& param_key) const {
    std::ostringstream os;
    os << kind << ",";
    auto it = params.find(param_key);
    if (it != params.end()) os << it->second;
    os << "," << cdp_after << "," << bit_acc << "," << id_acc;
    return os.str();
}

}  // namespace markboard
