// SPDX-License-Identifier: Apache-2.0

#include "markboard/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "markboard/errors.hpp"

namespace markboard {

std::vector<TriggerSpec> make_trigger_specs(int n, int image_size, int patch, float value,
                                            int classes) {
    if (n < 1) throw DomainError("trigger specs: n must be >= 1");
    if (patch < 1 || patch > 3) throw DomainError("trigger specs: patch size must be in [1,3]");
    if (image_size < 16) throw DomainError("trigger specs: image size must be >= 16");
    // Disjoint 3-pixel-pitch slots along the image border (the border ring is
    // the low-intensity zone of the synthetic images, so a max-intensity patch
    // there sits far outside clean variation). 16 slots.
    std::vector<std::pair<int, int>> slots;
    const int last = image_size - 3;
    for (int c : {0, 3, 6, 9, 12}) slots.emplace_back(0, c);
    for (int c : {0, 3, 6, 9, 12}) slots.emplace_back(last, c);
    for (int r : {3, 6, 9}) slots.emplace_back(r, 0);
    for (int r : {3, 6, 9}) slots.emplace_back(r, last);
    if (n > static_cast<int>(slots.size())) {
        throw DomainError("trigger specs: at most " + std::to_string(slots.size()) + " bits supported");
    }
    std::vector<TriggerSpec> specs;
    specs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        TriggerSpec s;
        s.bit = i;
        s.row = slots[static_cast<std::size_t>(i)].first;
        s.col = slots[static_cast<std::size_t>(i)].second;
        s.size = patch;
        s.value = value;
        s.target = i % classes;
        if (s.row + patch > image_size || s.col + patch > image_size) {
            throw DomainError("trigger specs: patch outside image bounds");
        }
        specs.push_back(s);
    }
    return specs;
}

Tensor apply_trigger(const Tensor& images, const TriggerSpec& spec, int image_size) {
    const int d = images.cols();
    if (d != image_size * image_size) {
        throw DimensionError("apply_trigger: image dim " + std::to_string(d) + " vs size " +
                             std::to_string(image_size) + "^2");
    }
    if (spec.row < 0 || spec.col < 0 || spec.row + spec.size > image_size ||
        spec.col + spec.size > image_size) {
        throw DomainError("apply_trigger: patch out of image bounds");
    }
    Tensor out = images;
    const int m = images.rows();
    for (int i = 0; i < m; ++i) {
        float* img = &out.data[static_cast<std::size_t>(i) * d];
        for (int r = spec.row; r < spec.row + spec.size; ++r) {
            for (int c = spec.col; c < spec.col + spec.size; ++c) {
                float& px = img[r * image_size + c];
                px = std::clamp(px + spec.value, 0.0f, 1.0f);
            }
        }
    }
    return out;
}

LabeledSet LabeledSet::subset(const std::vector<int>& indices) const {
    const int d = inputs.cols();
    Tensor sel = Tensor::zeros({static_cast<int>(indices.size()), d});
    std::vector<int> lab;
    lab.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        std::copy_n(&inputs.data[static_cast<std::size_t>(idx) * d], d,
                    &sel.data[i * static_cast<std::size_t>(d)]);
        lab.push_back(labels[static_cast<std::size_t>(idx)]);
    }
    return {std::move(sel), std::move(lab)};
}

Tensor make_blob_prototypes(int classes, int image_size, Rng& rng) {
    if (classes < 2) throw DomainError("blobs: need at least 2 classes");
    const int d = image_size * image_size;
    Tensor protos = Tensor::zeros({classes, d});
    // Bright class-specific interior, dim 3-pixel border ring on every class.
    // The border is where triggers land, so clean intensity there stays low.
    for (int c = 0; c < classes; ++c) {
        float* row = &protos.data[static_cast<std::size_t>(c) * d];
        for (int r = 0; r < image_size; ++r) {
            for (int col = 0; col < image_size; ++col) {
                const bool border = r < 3 || col < 3 || r >= image_size - 3 || col >= image_size - 3;
                row[r * image_size + col] = border ? 0.02f + 0.13f * rng.uniform_f()
                                                   : 0.20f + 0.75f * rng.uniform_f();
            }
        }
    }
    return protos;
}

LabeledSet sample_blobs(const Tensor& prototypes, int image_size, int per_class, float noise_sigma,
                        float border_sigma, Rng& rng) {
    if (per_class < 1) throw DomainError("blobs: per_class must be positive");
    const int classes = prototypes.rows();
    const int d = prototypes.cols();
    if (d != image_size * image_size) throw DimensionError("blobs: prototype dim vs image size");
    std::vector<float> sigma(static_cast<std::size_t>(d));
    for (int r = 0; r < image_size; ++r) {
        for (int col = 0; col < image_size; ++col) {
            const bool border = r < 3 || col < 3 || r >= image_size - 3 || col >= image_size - 3;
            sigma[static_cast<std::size_t>(r * image_size + col)] = border ? border_sigma : noise_sigma;
        }
    }
    const int total = classes * per_class;
    Tensor inputs = Tensor::zeros({total, d});
    std::vector<int> labels(static_cast<std::size_t>(total));
    std::vector<int> order(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    for (int i = 0; i < total; ++i) {
        const int slot = order[static_cast<std::size_t>(i)];
        const int cls = i % classes;
        float* row = &inputs.data[static_cast<std::size_t>(slot) * d];
        const float* proto = &prototypes.data[static_cast<std::size_t>(cls) * d];
        for (int j = 0; j < d; ++j) {
            row[j] = std::clamp(proto[j] + sigma[static_cast<std::size_t>(j)] * rng.gaussian_f(),
                                0.0f, 1.0f);
        }
        labels[static_cast<std::size_t>(slot)] = cls;
    }
    return {std::move(inputs), std::move(labels)};
}

LabeledSet make_synthetic_blobs(int classes, int per_class, int image_size, float noise_sigma,
                                Rng& rng) {
    const Tensor protos = make_blob_prototypes(classes, image_size, rng);
    return sample_blobs(protos, image_size, per_class, noise_sigma, noise_sigma / 3.0f, rng);
}

DatasetBundle build_bundle(LabeledSet clean_train, LabeledSet clean_test,
                           const std::vector<TriggerSpec>& specs, int image_size, double ratio,
                           int probe_count, Rng& rng) {
    if (ratio <= 0.0 || ratio > 1.0) throw DomainError("build_bundle: ratio must be in (0,1]");
    if (specs.empty()) throw DomainError("build_bundle: no trigger specs");
    const int n_train = clean_train.size();
    const int n_test = clean_test.size();
    const int per_bit = std::max(8, static_cast<int>(std::ceil(ratio * n_train)));
    if (per_bit > n_train) {
        throw DomainError("build_bundle: clean train set too small for " + std::to_string(per_bit) +
                          " triggered samples per bit");
    }
    if (probe_count > n_test) {
        throw DomainError("build_bundle: clean test set smaller than probe count");
    }

    DatasetBundle bundle;
    bundle.specs = specs;
    bundle.ratio = ratio;
    for (const TriggerSpec& spec : specs) {
        const auto train_idx = rng.sample_without_replacement(n_train, per_bit);
        const auto test_idx = rng.sample_without_replacement(n_test, probe_count);
        TriggeredSet tr{spec.bit, spec.target,
                        apply_trigger(clean_train.subset(train_idx).inputs, spec, image_size)};
        TriggeredSet te{spec.bit, spec.target,
                        apply_trigger(clean_test.subset(test_idx).inputs, spec, image_size)};
        bundle.wm_train.push_back(std::move(tr));
        bundle.wm_test.push_back(std::move(te));
    }
    bundle.clean_train = std::move(clean_train);
    bundle.clean_test = std::move(clean_test);
    return bundle;
}

TriggerBank bank_from_bundle(const DatasetBundle& bundle) {
    TriggerBank bank;
    for (const auto& set : bundle.wm_test) {
        bank.probes.push_back(set.inputs);
        bank.targets.push_back(set.target);
    }
    return bank;
}

}  // namespace markboard
