// SPDX-License-Identifier: Apache-2.0

#include "markboard/optim.hpp"

#include <cmath>

namespace markboard {

Optimizer::Optimizer(std::vector<Parameter*> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
    if (config_.kind == OptimizerKind::adam) {
        moments_.reserve(params_.size());
        for (const Parameter* p : params_) {
            moments_.push_back({Tensor::zeros(p->value.shape), Tensor::zeros(p->value.shape)});
        }
    }
}

void Optimizer::step() {
    ++step_count_;
    const auto t = static_cast<double>(step_count_);
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Parameter* p = params_[pi];
        if (!p->frozen) {
            if (config_.kind == OptimizerKind::sgd) {
                for (std::size_t i = 0; i < p->value.data.size(); ++i) {
                    p->value.data[i] -= config_.lr * p->grad.data[i];
                }
            } else {
                Moments& mom = moments_[pi];
                const double bc1 = 1.0 - std::pow(static_cast<double>(config_.beta1), t);
                const double bc2 = 1.0 - std::pow(static_cast<double>(config_.beta2), t);
                for (std::size_t i = 0; i < p->value.data.size(); ++i) {
                    const float g = p->grad.data[i];
                    float& m = mom.m.data[i];
                    float& v = mom.v.data[i];
                    m = config_.beta1 * m + (1.0f - config_.beta1) * g;
                    v = config_.beta2 * v + (1.0f - config_.beta2) * g * g;
                    const double mhat = static_cast<double>(m) / bc1;
                    const double vhat = static_cast<double>(v) / bc2;
                    p->value.data[i] -= static_cast<float>(config_.lr * mhat /
                                                           (std::sqrt(vhat) + config_.eps));
                }
            }
        }
        p->zero_grad();
    }
}

}  // namespace markboard
