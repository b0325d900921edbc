// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "markboard/errors.hpp"

namespace markboard {

/// Dense row-major float32 array with shape metadata. Values are immutable by
/// convention once an op has produced them; ops return fresh tensors.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<float> data_);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float value);
    static Tensor from_rows(const std::vector<std::vector<float>>& rows);
    static Tensor scalar(float value);

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    // 2-D accessors; 1-D tensors behave as a single row.
    int rows() const;
    int cols() const;
    float& at(int r, int c);
    float at(int r, int c) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<int>& shape);

// Plain (tape-free) math. The autodiff layer reuses these kernels; minting and
// verification call them directly so no gradient machinery runs there.

/// C = A * B. Accumulates in double, stores float32.
Tensor matmul(const Tensor& a, const Tensor& b);
/// C = A * B^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// C = A^T * B.
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor relu(const Tensor& a);
/// Adds a length-k row vector to every row of a [m x k] matrix.
Tensor add_row(const Tensor& a, const Tensor& row);
/// Scales row i of x by s[i]; s is [m] or [m x 1].
Tensor row_scale(const Tensor& x, const Tensor& s);
/// Row-wise softmax, stabilized by per-row max subtraction.
Tensor softmax_rows(const Tensor& logits);

std::vector<int> argmax_rows(const Tensor& logits);
/// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor& logits, const std::vector<int>& labels);

bool all_finite(const Tensor& t);
/// Throws NumericError naming `what` if t has a NaN/Inf entry.
void check_finite(const Tensor& t, const std::string& what);

}  // namespace markboard
