// SPDX-License-Identifier: Apache-2.0

#include "markboard/model.hpp"

#include <cmath>

namespace markboard {

void Topology::validate() const {
    if (layer_dims.size() < 2) throw DomainError("topology: need at least one layer");
    for (int d : layer_dims) {
        if (d <= 0) throw DomainError("topology: non-positive layer dimension");
    }
    if (image_size * image_size != input_dim()) {
        throw DomainError("topology: input dim does not match image size");
    }
    if (lora_layer < 0 || lora_layer >= num_layers()) {
        throw DomainError("topology: lora_layer out of range");
    }
    if (router_hidden <= 0) throw DomainError("topology: router_hidden must be positive");
}

Router Router::init(int input_dim, int hidden, int n, Rng& rng) {
    Router r;
    const float sigma = std::sqrt(2.0f / static_cast<float>(input_dim));
    Tensor w1 = Tensor::zeros({input_dim, hidden});
    for (float& v : w1.data) v = sigma * rng.gaussian_f();
    r.w1 = Parameter(std::move(w1));
    r.b1 = Parameter(Tensor::zeros({hidden}));
    r.w2 = Parameter(Tensor::zeros({hidden, n}));  // zero head -> uniform routing
    r.b2 = Parameter(Tensor::zeros({n}));
    return r;
}

std::vector<Parameter*> Router::params() { return {&w1, &b1, &w2, &b2}; }

Tensor route_logits(const Router& router, const Tensor& x) {
    if (x.cols() != router.input_dim()) {
        throw DimensionError("route: input dim " + std::to_string(x.cols()) + " vs router " +
                             std::to_string(router.input_dim()));
    }
    Tensor h = relu(add_row(matmul(x, router.w1.value), router.b1.value));
    return add_row(matmul(h, router.w2.value), router.b2.value);
}

Tensor route(const Router& router, const Tensor& x) { return softmax_rows(route_logits(router, x)); }

RouteTrace route(Tape& tape, Router& router, const Var& x) {
    Var h = relu(add_row(matmul(x, tape.leaf(router.w1)), tape.leaf(router.b1)));
    Var logits = add_row(matmul(h, tape.leaf(router.w2)), tape.leaf(router.b2));
    return {logits, softmax_rows(logits)};
}

std::vector<DenseLayer> init_base_layers(const Topology& topo, Rng& rng) {
    topo.validate();
    std::vector<DenseLayer> layers;
    layers.reserve(static_cast<std::size_t>(topo.num_layers()));
    for (int i = 0; i < topo.num_layers(); ++i) {
        const int d = topo.layer_dims[static_cast<std::size_t>(i)];
        const int k = topo.layer_dims[static_cast<std::size_t>(i) + 1];
        const float sigma = std::sqrt(2.0f / static_cast<float>(d));  // He init
        Tensor w = Tensor::zeros({d, k});
        for (float& v : w.data) v = sigma * rng.gaussian_f();
        layers.push_back({Parameter(std::move(w)), Parameter(Tensor::zeros({k}))});
    }
    return layers;
}

Parameter init_lora_a(int rank, int out_dim, Rng& rng) {
    // Branches start at zero, so A's scale is what makes the frozen-A branch
    // deltas reachable at the shared learning rate.
    const float sigma = 1.0f / std::sqrt(static_cast<float>(rank));
    Tensor a = Tensor::zeros({rank, out_dim});
    for (float& v : a.data) v = sigma * rng.gaussian_f();
    return Parameter(std::move(a));
}

std::vector<Parameter> init_branches(int n, int in_dim, int rank) {
    std::vector<Parameter> branches;
    branches.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) branches.emplace_back(Tensor::zeros({in_dim, rank}));
    return branches;
}

Tensor branch_delta(const Parameter& branch, const Parameter& a) {
    return matmul(branch.value, a.value);
}

void swap_branch(std::vector<Parameter>& branches, int i, const Tensor& new_b) {
    if (i < 0 || i >= static_cast<int>(branches.size())) {
        throw DomainError("swap_branch: index " + std::to_string(i) + " out of range");
    }
    if (!branches[static_cast<std::size_t>(i)].value.same_shape(new_b)) {
        throw DimensionError("swap_branch: replacement shape " + new_b.shape_str() + " vs " +
                             branches[static_cast<std::size_t>(i)].value.shape_str());
    }
    branches[static_cast<std::size_t>(i)].value = new_b;
}

Tensor lora_layer_forward(const Tensor& input, const Parameter& w0, const Parameter& bias,
                          const Parameter& lora_a, const std::vector<Parameter*>& branches,
                          const Tensor& routing) {
    if (routing.cols() != static_cast<int>(branches.size())) {
        throw ContractError("lora_layer_forward: routing width " + std::to_string(routing.cols()) +
                            " vs branch count " + std::to_string(branches.size()));
    }
    Tensor pre = add_row(matmul(input, w0.value), bias.value);
    Tensor omega_col = Tensor::zeros({routing.rows(), 1});
    for (std::size_t i = 0; i < branches.size(); ++i) {
        for (int m = 0; m < routing.rows(); ++m) omega_col.data[static_cast<std::size_t>(m)] = routing.at(m, static_cast<int>(i));
        Tensor u = matmul(matmul(input, branches[i]->value), lora_a.value);
        pre = add(pre, row_scale(u, omega_col));
    }
    return pre;
}

Tensor lora_layer_input(const ModelView& view, const Tensor& x) {
    if (x.cols() != view.topo->input_dim()) {
        throw DimensionError("model_forward: input dim " + std::to_string(x.cols()) + " vs " +
                             std::to_string(view.topo->input_dim()));
    }
    Tensor h = x;
    for (int i = 0; i < view.topo->lora_layer; ++i) {
        const DenseLayer& layer = (*view.base)[static_cast<std::size_t>(i)];
        h = relu(add_row(matmul(h, layer.weight.value), layer.bias.value));
    }
    return h;
}

RawForward model_forward_trace(const ModelView& view, const Tensor& x) {
    RawForward out;
    out.lora_input = lora_layer_input(view, x);
    out.routing = route(*view.router, out.lora_input);
    Tensor h = out.lora_input;
    for (int i = view.topo->lora_layer; i < view.topo->num_layers(); ++i) {
        const DenseLayer& layer = (*view.base)[static_cast<std::size_t>(i)];
        Tensor pre = (i == view.topo->lora_layer)
                         ? lora_layer_forward(h, layer.weight, layer.bias, *view.lora_a, view.branches, out.routing)
                         : add_row(matmul(h, layer.weight.value), layer.bias.value);
        h = (i + 1 == view.topo->num_layers()) ? pre : relu(pre);
    }
    out.logits = std::move(h);
    return out;
}

Tensor model_forward(const ModelView& view, const Tensor& x) {
    return model_forward_trace(view, x).logits;
}

namespace {

// Frozen parameters become constants; trainable ones become tape leaves.
Var bind(Tape& tape, Parameter& p) {
    if (p.frozen) return constant(p.value);
    return tape.leaf(p);
}

}  // namespace

TapedForward model_forward(Tape& tape, const ModelView& view, const Tensor& x) {
    TapedForward out;
    out.lora_input = lora_layer_input(view, x);
    Var h = constant(out.lora_input);
    out.routing = route(tape, *view.router, h);
    for (int i = view.topo->lora_layer; i < view.topo->num_layers(); ++i) {
        DenseLayer& layer = (*view.base)[static_cast<std::size_t>(i)];
        Var pre = add_row(matmul(h, bind(tape, layer.weight)), bind(tape, layer.bias));
        if (i == view.topo->lora_layer) {
            Var a = bind(tape, *view.lora_a);
            for (int b = 0; b < view.n(); ++b) {
                Var u = matmul(matmul(h, bind(tape, *view.branches[static_cast<std::size_t>(b)])), a);
                out.branch_outputs.push_back(u);
                pre = add(pre, row_scale(u, column(out.routing.probs, b)));
            }
        }
        h = (i + 1 == view.topo->num_layers()) ? pre : relu(pre);
    }
    out.logits = h;
    return out;
}

Var mlp_forward(Tape& tape, std::vector<DenseLayer>& layers, const Tensor& x) {
    Var h = constant(x);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Var pre = add_row(matmul(h, tape.leaf(layers[i].weight)), tape.leaf(layers[i].bias));
        h = (i + 1 == layers.size()) ? pre : relu(pre);
    }
    return h;
}

Tensor DistributedModel::forward(const Tensor& x) const {
    if (x.cols() != topo.input_dim()) {
        throw DimensionError("forward: input dim " + std::to_string(x.cols()) + " vs " +
                             std::to_string(topo.input_dim()));
    }
    Tensor h = x;
    for (int i = 0; i < topo.num_layers(); ++i) {
        const DenseLayer& layer = layers[static_cast<std::size_t>(i)];
        Tensor pre = add_row(matmul(h, layer.weight.value), layer.bias.value);
        if (i == topo.lora_layer && lora_enabled && n > 0) {
            Tensor omega = route(router, h);
            Tensor omega_col = Tensor::zeros({omega.rows(), 1});
            for (int b = 0; b < n; ++b) {
                for (int m = 0; m < omega.rows(); ++m) {
                    omega_col.data[static_cast<std::size_t>(m)] = omega.at(m, b);
                }
                pre = add(pre, row_scale(matmul(h, deltas[static_cast<std::size_t>(b)].value), omega_col));
            }
        }
        h = (i + 1 == topo.num_layers()) ? pre : relu(pre);
    }
    return h;
}

std::vector<Parameter*> DistributedModel::all_params() {
    std::vector<Parameter*> out;
    for (auto& layer : layers) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    for (auto& d : deltas) out.push_back(&d);
    for (auto* p : router.params()) out.push_back(p);
    return out;
}

std::vector<const Parameter*> DistributedModel::all_params() const {
    std::vector<const Parameter*> out;
    for (const auto& layer : layers) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    for (const auto& d : deltas) out.push_back(&d);
    // router params, same order as the mutable overload
    out.push_back(&router.w1);
    out.push_back(&router.b1);
    out.push_back(&router.w2);
    out.push_back(&router.b2);
    return out;
}

Var distributed_forward(Tape& tape, DistributedModel& model, const Tensor& x) {
    Var h = constant(x);
    for (int i = 0; i < model.topo.num_layers(); ++i) {
        DenseLayer& layer = model.layers[static_cast<std::size_t>(i)];
        Var pre = add_row(matmul(h, tape.leaf(layer.weight)), tape.leaf(layer.bias));
        if (i == model.topo.lora_layer && model.lora_enabled && model.n > 0) {
            RouteTrace omega = route(tape, model.router, h);
            for (int b = 0; b < model.n; ++b) {
                Var u = matmul(h, tape.leaf(model.deltas[static_cast<std::size_t>(b)]));
                pre = add(pre, row_scale(u, column(omega.probs, b)));
            }
        }
        h = (i + 1 == model.topo.num_layers()) ? pre : relu(pre);
    }
    return h;
}

}  // namespace markboard
