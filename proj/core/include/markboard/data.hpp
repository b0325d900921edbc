// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "markboard/rng.hpp"
#include "markboard/tensor.hpp"

namespace markboard {

/// One bit-watermark trigger: a square patch of fixed intensity added at a
/// fixed position, plus the target label the backdoor should force.
struct TriggerSpec {
    int bit = 0;
    int row = 0;
    int col = 0;
    int size = 3;
    float value = 1.0f;
    int target = 0;

    bool operator==(const TriggerSpec&) const = default;
};

/// Patch placements for up to 16 bits on a 4-pixel lattice, border slots
/// first. Placements are pairwise disjoint. target = bit mod classes.
std::vector<TriggerSpec> make_trigger_specs(int n, int image_size, int patch, float value,
                                            int classes);

/// x + patch, clamped to [0,1]. Accepts a single flattened image [D] or a
/// batch [N x D]; pixels outside the patch are untouched.
Tensor apply_trigger(const Tensor& images, const TriggerSpec& spec, int image_size);

struct LabeledSet {
    Tensor inputs;  // [N x D], values in [0,1]
    std::vector<int> labels;

    int size() const { return inputs.rows(); }
    LabeledSet subset(const std::vector<int>& indices) const;
};

/// Class prototypes: bright class-specific interior, dim 3-pixel border ring.
Tensor make_blob_prototypes(int classes, int image_size, Rng& rng);
/// Samples = prototype + Gaussian noise, clamped to [0,1]; emitted shuffled.
/// Interior pixels get noise_sigma, the border ring border_sigma (the border
/// is the trigger zone, so its clean variation stays small). Train and test
/// splits must share prototypes to be the same distribution.
LabeledSet sample_blobs(const Tensor& prototypes, int image_size, int per_class, float noise_sigma,
                        float border_sigma, Rng& rng);
LabeledSet make_synthetic_blobs(int classes, int per_class, int image_size, float noise_sigma,
                                Rng& rng);

/// All triggered samples for one bit share the bit's target label.
struct TriggeredSet {
    int bit = 0;
    int target = 0;
    Tensor inputs;

    int size() const { return inputs.rows(); }
};

struct DatasetBundle {
    LabeledSet clean_train;
    LabeledSet clean_test;
    std::vector<TriggeredSet> wm_train;  // per bit
    std::vector<TriggeredSet> wm_test;   // per bit, sources held out from wm_train
    std::vector<TriggerSpec> specs;
    double ratio = 0.01;

    int n() const { return static_cast<int>(specs.size()); }
};

/// Per-bit triggered train sets drawn from clean_train (ceil(ratio*|train|),
/// floor 8 samples) and probe test sets drawn from clean_test.
DatasetBundle build_bundle(LabeledSet clean_train, LabeledSet clean_test,
                           const std::vector<TriggerSpec>& specs, int image_size, double ratio,
                           int probe_count, Rng& rng);

/// The per-bit held-out probe sets used for black-box verification; shipped
/// inside the pair artifact.
struct TriggerBank {
    std::vector<Tensor> probes;  // per bit [probe_count x D]
    std::vector<int> targets;

    int n() const { return static_cast<int>(probes.size()); }
};

TriggerBank bank_from_bundle(const DatasetBundle& bundle);

}  // namespace markboard
