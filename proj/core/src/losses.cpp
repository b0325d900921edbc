// SPDX-License-Identifier: Apache-2.0

#include "markboard/losses.hpp"

#include <string>

namespace markboard {

namespace {

void require_triggered(const TriggeredBatch& batch, int n, const char* who) {
    if (batch.inputs.rows() != static_cast<int>(batch.bits.size())) {
        throw DimensionError(std::string(who) + ": bit count does not match batch rows");
    }
    for (int b : batch.bits) {
        if (b < 0) throw ContractError(std::string(who) + ": clean sample in a triggered batch");
        if (b >= n) throw DomainError(std::string(who) + ": bit index out of range");
    }
}

}  // namespace

Var loss_route(Tape& tape, const ModelView& fprime, const TriggeredBatch& batch) {
    require_triggered(batch, fprime.n(), "loss_route");
    Tensor h = lora_layer_input(fprime, batch.inputs);
    RouteTrace trace = route(tape, *fprime.router, constant(h));
    return cross_entropy_logits(trace.logits, batch.bits);
}

Var loss_wm(Tape& tape, const ModelView& fprime, const TriggeredBatch& batch) {
    require_triggered(batch, fprime.n(), "loss_wm");
    if (batch.targets.size() != batch.bits.size()) {
        throw DimensionError("loss_wm: target count does not match batch rows");
    }
    TapedForward fwd = model_forward(tape, fprime, batch.inputs);
    return cross_entropy_logits(fwd.logits, batch.targets);
}

Var loss_align(Tape& tape, const ModelView& fprime, const ModelView& f, const Tensor& clean_inputs) {
    if (fprime.n() != f.n()) throw ContractError("loss_align: branch counts differ");
    for (int j = 0; j < f.n(); ++j) {
        if (!fprime.branches[static_cast<std::size_t>(j)]->value.same_shape(
                f.branches[static_cast<std::size_t>(j)]->value)) {
            throw ContractError("loss_align: branch " + std::to_string(j) + " shapes differ");
        }
    }
    Tensor h = lora_layer_input(fprime, clean_inputs);
    Var hv = constant(h);
    Var a = constant(fprime.lora_a->value);
    Var total;
    for (int j = 0; j < fprime.n(); ++j) {
        Var out_wm = matmul(matmul(hv, tape.leaf(*fprime.branches[static_cast<std::size_t>(j)])), a);
        Tensor out_clean = matmul(matmul(h, f.branches[static_cast<std::size_t>(j)]->value),
                                  f.lora_a->value);
        Var term = mse(out_wm, constant(std::move(out_clean)));
        total = total ? add(total, term) : term;
    }
    return scale(total, 1.0f / static_cast<float>(fprime.n()));
}

Var route_consistency(Tape& tape, const ModelView& fprime, const Tensor& clean_inputs,
                      const Tensor& anchor_probs) {
    Tensor h = lora_layer_input(fprime, clean_inputs);
    RouteTrace trace = route(tape, *fprime.router, constant(h));
    return mse(trace.probs, constant(anchor_probs));
}

Var loss_utility(Tape& tape, const ModelView& view, const Tensor& inputs,
                 const std::vector<int>& labels) {
    TapedForward fwd = model_forward(tape, view, inputs);
    return cross_entropy_logits(fwd.logits, labels);
}

}  // namespace markboard
