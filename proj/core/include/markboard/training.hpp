// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "markboard/config.hpp"
#include "markboard/data.hpp"
#include "markboard/model.hpp"

namespace markboard {

/// Receives one line-delimited JSON metrics record per epoch.
using MetricsSink = std::function<void(const std::string& json_line)>;

/// The jointly trained complementary pair. F (clean branches, signature 0...0)
/// and F' (watermarked branches, signature 1...1) share the frozen base, the
/// shared A, and one router; they differ only in their branch matrices.
struct ModelPair {
    Topology topo;
    int n = 0;
    int rank = 0;
    std::vector<DenseLayer> base;
    Parameter lora_a;
    std::vector<Parameter> clean_branches;
    std::vector<Parameter> wm_branches;
    Router router;
    std::vector<TriggerSpec> triggers;
    TriggerBank bank;
    RunConfig config;
    double train_seconds = 0.0;

    ModelView inactive_view();                                      // F
    ModelView active_view();                                        // F'
    ModelView signature_view(const std::vector<std::uint8_t>& bits);  // per-bit mix

    std::vector<Parameter*> branch_params(std::vector<Parameter>& set);
};

/// Freshly initialized, untrained pair (watermark branches empty until the
/// copy step of train_pair).
ModelPair init_pair(const RunConfig& config, Rng& rng);

/// Deterministically regenerates the datasets and trigger sets a config
/// describes; train_pair itself goes through this.
DatasetBundle make_bundle_from_config(const RunConfig& config);

double clean_accuracy(const ModelView& view, const LabeledSet& set);
/// Fraction of held-out triggered samples routed (argmax) to their bit.
double route_accuracy(const ModelView& view, const DatasetBundle& bundle,
                      const std::vector<int>& skip_bits);
/// Fraction of bank probes for `bit` classified as the bit's target.
double bit_success(const ModelView& view, const TriggerBank& bank, int bit);
/// Mean per-branch output MSE between F' and F branches on clean inputs.
double branch_alignment_mse(ModelView fprime, ModelView f, const Tensor& clean_inputs);
/// Mean L1 distance between the view's routing and an anchor router's routing
/// on clean inputs.
double clean_route_drift(const ModelView& view, const Router& anchor, const Tensor& clean_inputs);

// Training phases. Each emits metrics and throws TrainingFailure (naming the
// phase) when its configured floor is missed.
void pretrain_base(ModelPair& pair, const DatasetBundle& bundle, Rng& rng, const MetricsSink& sink);
void train_inactive(ModelPair& pair, const DatasetBundle& bundle, Rng& rng, const MetricsSink& sink);
/// Copies clean branches into the watermark set and snapshots the router as
/// the clean-routing anchor for the consistency penalty.
Router copy_inactive_to_active(ModelPair& pair);
void warmup_router(ModelPair& pair, const DatasetBundle& bundle, const Router& anchor, Rng& rng,
                   const MetricsSink& sink);
void train_active(ModelPair& pair, const DatasetBundle& bundle, const Router& anchor, Rng& rng,
                  const MetricsSink& sink);

/// Full pipeline: base pretrain -> train_inactive -> copy -> warmup_router ->
/// train_active; freezes the pair and records wall time. When out_bundle is
/// given the generated datasets are moved there.
ModelPair train_pair(const RunConfig& config, const MetricsSink& sink,
                     DatasetBundle* out_bundle = nullptr);

}  // namespace markboard
