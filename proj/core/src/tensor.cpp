// SPDX-License-Identifier: Apache-2.0

#include "markboard/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace markboard {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimension must be positive, got " + std::to_string(d));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str());
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(n, value));
}

Tensor Tensor::from_rows(const std::vector<std::vector<float>>& rows) {
    if (rows.empty()) throw DimensionError("from_rows: no rows");
    int m = static_cast<int>(rows.size());
    int k = static_cast<int>(rows[0].size());
    std::vector<float> flat;
    flat.reserve(static_cast<std::size_t>(m) * k);
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != k) throw DimensionError("from_rows: ragged rows");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor({m, k}, std::move(flat));
}

Tensor Tensor::scalar(float value) { return Tensor({1}, {value}); }

int Tensor::rows() const {
    if (shape.size() == 2) return shape[0];
    if (shape.size() == 1) return 1;
    throw DimensionError("rows(): tensor is not 1-D or 2-D");
}

int Tensor::cols() const {
    if (shape.size() == 2) return shape[1];
    if (shape.size() == 1) return shape[0];
    throw DimensionError("cols(): tensor is not 1-D or 2-D");
}

float& Tensor::at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
float Tensor::at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

namespace {

void require_2d(const Tensor& t, const char* who) {
    if (t.shape.size() != 2 && t.shape.size() != 1) {
        throw DimensionError(std::string(who) + ": expected 1-D or 2-D tensor, got " + t.shape_str());
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int m = a.rows(), k = a.cols(), k2 = b.rows(), p = b.cols();
    if (k != k2) {
        throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() + " x " + b.shape_str());
    }
    Tensor out = Tensor::zeros({m, p});
    std::vector<double> acc(static_cast<std::size_t>(p));
    for (int i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* arow = &a.data[static_cast<std::size_t>(i) * k];
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const float* brow = &b.data[static_cast<std::size_t>(kk) * p];
            for (int j = 0; j < p; ++j) acc[j] += av * static_cast<double>(brow[j]);
        }
        float* orow = &out.data[static_cast<std::size_t>(i) * p];
        for (int j = 0; j < p; ++j) orow[j] = static_cast<float>(acc[j]);
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    const int m = a.rows(), k = a.cols(), p = b.rows();
    if (k != b.cols()) {
        throw DimensionError("matmul_nt: inner dimensions disagree, " + a.shape_str() + " x " + b.shape_str() + "^T");
    }
    Tensor out = Tensor::zeros({m, p});
    for (int i = 0; i < m; ++i) {
        const float* arow = &a.data[static_cast<std::size_t>(i) * k];
        float* orow = &out.data[static_cast<std::size_t>(i) * p];
        for (int j = 0; j < p; ++j) {
            const float* brow = &b.data[static_cast<std::size_t>(j) * k];
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk) acc += static_cast<double>(arow[kk]) * static_cast<double>(brow[kk]);
            orow[j] = static_cast<float>(acc);
        }
    }
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_tn");
    require_2d(b, "matmul_tn");
    const int k = a.rows(), m = a.cols(), p = b.cols();
    if (k != b.rows()) {
        throw DimensionError("matmul_tn: inner dimensions disagree, " + a.shape_str() + "^T x " + b.shape_str());
    }
    std::vector<double> acc(static_cast<std::size_t>(m) * p, 0.0);
    for (int kk = 0; kk < k; ++kk) {
        const float* arow = &a.data[static_cast<std::size_t>(kk) * m];
        const float* brow = &b.data[static_cast<std::size_t>(kk) * p];
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            double* orow = &acc[static_cast<std::size_t>(i) * p];
            for (int j = 0; j < p; ++j) orow[j] += av * static_cast<double>(brow[j]);
        }
    }
    Tensor out = Tensor::zeros({m, p});
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i]);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Tensor scale(const Tensor& a, float s) {
    Tensor out = a;
    for (float& v : out.data) v *= s;
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = a;
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    require_2d(a, "add_row");
    const int m = a.rows(), k = a.cols();
    if (static_cast<int>(row.size()) != k) {
        throw DimensionError("add_row: row length " + std::to_string(row.size()) + " vs cols " + std::to_string(k));
    }
    Tensor out = a;
    for (int i = 0; i < m; ++i) {
        float* orow = &out.data[static_cast<std::size_t>(i) * k];
        for (int j = 0; j < k; ++j) orow[j] += row.data[j];
    }
    return out;
}

Tensor row_scale(const Tensor& x, const Tensor& s) {
    require_2d(x, "row_scale");
    const int m = x.rows(), k = x.cols();
    if (static_cast<int>(s.size()) != m) {
        throw DimensionError("row_scale: scale length " + std::to_string(s.size()) + " vs rows " + std::to_string(m));
    }
    Tensor out = x;
    for (int i = 0; i < m; ++i) {
        float* orow = &out.data[static_cast<std::size_t>(i) * k];
        const float sv = s.data[i];
        for (int j = 0; j < k; ++j) orow[j] *= sv;
    }
    return out;
}

Tensor softmax_rows(const Tensor& logits) {
    require_2d(logits, "softmax");
    if (logits.empty()) throw DimensionError("softmax: empty input");
    const int m = logits.rows(), k = logits.cols();
    Tensor out = Tensor::zeros({m, k});
    for (int i = 0; i < m; ++i) {
        const float* z = &logits.data[static_cast<std::size_t>(i) * k];
        float zmax = z[0];
        for (int j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
        double denom = 0.0;
        float* p = &out.data[static_cast<std::size_t>(i) * k];
        for (int j = 0; j < k; ++j) {
            const double e = std::exp(static_cast<double>(z[j]) - zmax);
            p[j] = static_cast<float>(e);
            denom += e;
        }
        for (int j = 0; j < k; ++j) p[j] = static_cast<float>(p[j] / denom);
    }
    return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    const int m = logits.rows(), k = logits.cols();
    std::vector<int> out(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const float* z = &logits.data[static_cast<std::size_t>(i) * k];
        int best = 0;
        for (int j = 1; j < k; ++j) {
            if (z[j] > z[best]) best = j;
        }
        out[i] = best;
    }
    return out;
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    if (labels.empty()) throw DomainError("accuracy: empty label set");
    if (static_cast<int>(labels.size()) != logits.rows()) {
        throw DimensionError("accuracy: label count does not match batch rows");
    }
    const auto pred = argmax_rows(logits);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += (pred[i] == labels[i]);
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

bool all_finite(const Tensor& t) {
    for (float v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void check_finite(const Tensor& t, const std::string& what) {
    if (!all_finite(t)) throw NumericError("non-finite values in " + what);
}

}  // namespace markboard
