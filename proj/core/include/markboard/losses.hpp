// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "markboard/autodiff.hpp"
#include "markboard/model.hpp"

namespace markboard {

/// Triggered minibatch: every row of inputs carries the trigger of bits[i].
/// A bit of -1 marks a clean sample, which the route/wm losses reject.
struct TriggeredBatch {
    Tensor inputs;
    std::vector<int> bits;
    std::vector<int> targets;
};

/// Cross-entropy between the routing output on triggered samples and the
/// one-hot basis vector of each sample's bit. Clean samples are a contract
/// violation: they train through the utility objective instead.
Var loss_route(Tape& tape, const ModelView& fprime, const TriggeredBatch& batch);

/// Cross-entropy of the full model output on triggered samples against each
/// bit's target label.
Var loss_wm(Tape& tape, const ModelView& fprime, const TriggeredBatch& batch);

/// Mean squared error between per-branch outputs x*B~_j*A of fprime and
/// x*B_j*A of f on clean inputs, averaged over branches. Gradients reach only
/// fprime's branches; f's side enters as constants.
Var loss_align(Tape& tape, const ModelView& fprime, const ModelView& f, const Tensor& clean_inputs);

/// MSE between fprime's routing on clean inputs and a frozen anchor routing
/// (F's router before warm-up). Keeps clean routing adaptive while triggers
/// are forced one-hot.
Var route_consistency(Tape& tape, const ModelView& fprime, const Tensor& clean_inputs,
                      const Tensor& anchor_probs);

/// Task utility loss (classification cross-entropy) through a full taped
/// forward of the given view.
Var loss_utility(Tape& tape, const ModelView& view, const Tensor& inputs,
                 const std::vector<int>& labels);

}  // namespace markboard
