// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "markboard/autodiff.hpp"

namespace markboard {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// First-order optimizer over a fixed parameter set. step() applies the update
/// to every non-frozen parameter, then zeroes all grads (frozen included).
class Optimizer {
public:
    Optimizer(std::vector<Parameter*> params, OptimizerConfig config);

    void step();
    std::uint64_t step_count() const { return step_count_; }
    const OptimizerConfig& config() const { return config_; }

private:
    struct Moments {
        Tensor m;
        Tensor v;
    };

    std::vector<Parameter*> params_;
    OptimizerConfig config_;
    std::vector<Moments> moments_;
    std::uint64_t step_count_ = 0;
};

}  // namespace markboard
