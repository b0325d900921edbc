// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "markboard/tensor.hpp"

namespace markboard {

/// Trainable tensor. Gradients accumulate into `grad` during backward();
/// frozen parameters still receive gradients but are skipped by optimizers.
struct Parameter {
    Tensor value;
    Tensor grad;
    bool frozen = false;

    Parameter() = default;
    explicit Parameter(Tensor v, bool frozen_ = false)
        : value(std::move(v)), grad(Tensor::zeros(value.shape)), frozen(frozen_) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0f); }
};

class Node;
using Var = std::shared_ptr<Node>;

/// One entry of the gradient tape. The graph is rebuilt every step; a Node
/// owns its forward value and, after backward(), its gradient.
class Node {
public:
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;  // pulls this->grad into parents
    Parameter* source = nullptr;             // set for leaves bound to a Parameter

    explicit Node(Tensor v) : value(std::move(v)) {}
    void ensure_grad() {
        if (grad.data.empty()) grad = Tensor::zeros(value.shape);
    }
};

/// Global counters used by the retraining-free-minting check: minting must not
/// build tape nodes or run backward.
struct GradInstrumentation {
    static std::atomic<std::uint64_t> nodes_created;
    static std::atomic<std::uint64_t> backward_calls;
};

/// Leaf cache for one training step: each Parameter maps to exactly one leaf
/// node so gradients from several uses accumulate in one place.
class Tape {
public:
    Var leaf(Parameter& p);
    /// Leaves bound during this step (used to flush grads in backward()).
    const std::vector<Var>& leaves() const { return leaves_; }

private:
    std::unordered_map<Parameter*, Var> bound_;
    std::vector<Var> leaves_;
};

Var constant(Tensor value);

// Tape-tracked ops. Same kernels as the plain Tensor functions, plus a
// backward closure.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var relu(const Var& a);
Var add_row(const Var& a, const Var& row);
Var row_scale(const Var& x, const Var& s);
/// Column j of a [m x n] matrix as [m x 1].
Var column(const Var& x, int j);
Var softmax_rows(const Var& logits);
/// Mean cross-entropy of row-wise logits against integer class targets.
Var cross_entropy_logits(const Var& logits, const std::vector<int>& targets);
/// Mean squared error over all entries.
Var mse(const Var& a, const Var& b);
Var sum_all(const Var& a);

/// Reverse-mode sweep from a scalar loss. Accumulates into Parameter::grad for
/// every leaf the tape bound. Throws ContractError if loss is not scalar.
void backward(const Var& loss, const Tape& tape);

}  // namespace markboard
