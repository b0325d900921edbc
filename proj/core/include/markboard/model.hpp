// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "markboard/autodiff.hpp"
#include "markboard/rng.hpp"
#include "markboard/tensor.hpp"

namespace markboard {

/// Layer dimensions of the dense classifier and where the multi-branch LoRA
/// module attaches. layer_dims = {input, hidden..., classes}; layer i maps
/// layer_dims[i] -> layer_dims[i+1] with a relu after every layer but the last.
struct Topology {
    int image_size = 16;
    std::vector<int> layer_dims;
    int lora_layer = 1;
    int router_hidden = 64;

    int input_dim() const { return layer_dims.front(); }
    int classes() const { return layer_dims.back(); }
    int num_layers() const { return static_cast<int>(layer_dims.size()) - 1; }
    int lora_in() const { return layer_dims[static_cast<std::size_t>(lora_layer)]; }
    int lora_out() const { return layer_dims[static_cast<std::size_t>(lora_layer) + 1]; }
    void validate() const;
    bool operator==(const Topology&) const = default;
};

struct DenseLayer {
    Parameter weight;  // [d x k]
    Parameter bias;    // [k]
};

/// Two dense layers ending in a softmax over the n branches. The head weights
/// start at zero so an untrained router emits the uniform distribution.
struct Router {
    Parameter w1, b1;  // [d x h], [h]
    Parameter w2, b2;  // [h x n], [n]

    int input_dim() const { return w1.value.rows(); }
    int hidden() const { return w1.value.cols(); }
    int branches() const { return w2.value.cols(); }

    static Router init(int input_dim, int hidden, int n, Rng& rng);
    std::vector<Parameter*> params();
};

struct RouteTrace {
    Var logits;
    Var probs;
};

/// Routing vector for a batch of (already flattened) layer inputs: [m x n]
/// rows summing to 1.
Tensor route(const Router& router, const Tensor& x);
Tensor route_logits(const Router& router, const Tensor& x);
RouteTrace route(Tape& tape, Router& router, const Var& x);

std::vector<DenseLayer> init_base_layers(const Topology& topo, Rng& rng);
/// Shared A gets small Gaussian entries, branches start at zero so the model
/// initially reproduces the base function.
Parameter init_lora_a(int rank, int out_dim, Rng& rng);
std::vector<Parameter> init_branches(int n, int in_dim, int rank);

/// Dense [d x k] product B_i * A of one branch against the shared A.
Tensor branch_delta(const Parameter& branch, const Parameter& a);
/// Replaces branch i. Everything else is untouched.
void swap_branch(std::vector<Parameter>& branches, int i, const Tensor& new_b);

/// Assembled view over one choice of branch set (clean, watermarked, or a
/// per-bit mix). Non-owning; the pair outlives its views.
struct ModelView {
    const Topology* topo = nullptr;
    std::vector<DenseLayer>* base = nullptr;
    Parameter* lora_a = nullptr;
    std::vector<Parameter*> branches;
    Router* router = nullptr;

    int n() const { return static_cast<int>(branches.size()); }
};

/// x * (W0 + sum_i w_i B_i A) + bias for one layer, with the delta applied in
/// factored form (x*B_i then *A); the dense product is never materialized.
Tensor lora_layer_forward(const Tensor& input, const Parameter& w0, const Parameter& bias,
                          const Parameter& lora_a, const std::vector<Parameter*>& branches,
                          const Tensor& routing);

/// Forward pass up to (not including) the LoRA-bearing layer. These layers are
/// frozen in every phase past base pretraining, so this path never needs a tape.
Tensor lora_layer_input(const ModelView& view, const Tensor& x);

struct RawForward {
    Tensor logits;
    Tensor routing;     // [m x n]
    Tensor lora_input;  // [m x d]
};

Tensor model_forward(const ModelView& view, const Tensor& x);
RawForward model_forward_trace(const ModelView& view, const Tensor& x);

struct TapedForward {
    Var logits;
    RouteTrace routing;
    std::vector<Var> branch_outputs;  // x*B_i*A per branch, pre-routing weight
    Tensor lora_input;                // computed raw (frozen layers below)
};

/// Training-time forward: layers below the LoRA attachment run raw, everything
/// from the routing decision onward is tape-tracked. Frozen parameters enter
/// the graph as constants, trainable ones as leaves.
TapedForward model_forward(Tape& tape, const ModelView& view, const Tensor& x);

/// Plain MLP forward with every layer trainable; used for base pretraining.
Var mlp_forward(Tape& tape, std::vector<DenseLayer>& layers, const Tensor& x);

/// A distributed (minted) model: dense per-branch deltas instead of factors,
/// obfuscated base weights at the LoRA layer. This is the attacker-visible
/// object; attacks mutate copies of it.
struct DistributedModel {
    Topology topo;
    int n = 0;
    std::vector<DenseLayer> layers;
    std::vector<Parameter> deltas;  // [d x k] each
    Router router;
    bool lora_enabled = true;

    Tensor forward(const Tensor& x) const;
    std::vector<Parameter*> all_params();
    std::vector<const Parameter*> all_params() const;
};

/// Tape-tracked forward over every parameter of a distributed model (the
/// fine-tuning attacker trains all of them).
Var distributed_forward(Tape& tape, DistributedModel& model, const Tensor& x);

}  // namespace markboard
