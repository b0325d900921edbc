// SPDX-License-Identifier: Apache-2.0

#include "markboard/mint.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>

namespace markboard {

int matrix_rank(const Tensor& m, double tol) {
    const int rows = m.rows(), cols = m.cols();
    std::vector<double> a(m.data.begin(), m.data.end());
    auto at = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r) * cols + c]; };
    int rank = 0;
    for (int col = 0; col < cols && rank < rows; ++col) {
        int pivot = rank;
        for (int r = rank + 1; r < rows; ++r) {
            if (std::abs(at(r, col)) > std::abs(at(pivot, col))) pivot = r;
        }
        if (std::abs(at(pivot, col)) < tol) continue;
        if (pivot != rank) {
            for (int c = col; c < cols; ++c) std::swap(at(pivot, c), at(rank, c));
        }
        for (int r = rank + 1; r < rows; ++r) {
            const double f = at(r, col) / at(rank, col);
            for (int c = col; c < cols; ++c) at(r, c) -= f * at(rank, c);
        }
        ++rank;
    }
    return rank;
}

namespace {

double frobenius(const Tensor& t) {
    double acc = 0.0;
    for (float v : t.data) acc += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(acc);
}

double entry_std(const Tensor& t) {
    double mean = 0.0;
    for (float v : t.data) mean += v;
    mean /= static_cast<double>(t.data.size());
    double var = 0.0;
    for (float v : t.data) {
        const double d = v - mean;
        var += d * d;
    }
    return std::sqrt(var / static_cast<double>(t.data.size()));
}

}  // namespace

Tensor generate_psi(const Tensor& w0, std::uint64_t psi_seed, float psi_scale) {
    const double sigma = psi_scale * entry_std(w0);
    const double w0_norm = frobenius(w0);
    const int min_dim = std::min(w0.rows(), w0.cols());
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(psi_seed, 100 + attempt);
        Tensor psi = Tensor::zeros(w0.shape);
        for (float& v : psi.data) v = static_cast<float>(sigma * rng.gaussian());
        // keep the norm ratio inside the documented [0.5, 2.0] band
        const double ratio = frobenius(psi) / w0_norm;
        if (ratio < 0.5 || ratio > 2.0) {
            const double target = std::clamp(ratio, 0.6, 1.9);
            psi = scale(psi, static_cast<float>(target / ratio));
        }
        if (matrix_rank(psi) == min_dim) return psi;
    }
}

std::pair<Tensor, std::vector<Tensor>> obfuscate(const Tensor& w0, const std::vector<Tensor>& deltas,
                                                 const Tensor& psi) {
    if (!psi.same_shape(w0)) throw DimensionError("obfuscate: psi shape differs from W0");
    std::vector<Tensor> out;
    out.reserve(deltas.size());
    for (const Tensor& d : deltas) {
        if (!d.same_shape(w0)) throw DimensionError("obfuscate: delta shape differs from W0");
        out.push_back(sub(d, psi));
    }
    return {add(w0, psi), std::move(out)};
}

Artifact mint(const ModelPair& pair, const Signature& signature, std::uint64_t psi_seed,
              const std::string& minted_at, const MintOptions& options) {
    if (signature.n() != pair.n) {
        throw DimensionError("mint: signature length " + std::to_string(signature.n()) +
                             " does not match pair n=" + std::to_string(pair.n));
    }
    if (signature.reserved() && !options.allow_reserved_signature) {
        throw DomainError("mint: all-zero/all-one signatures are reserved for the pair itself");
    }

    DistributedModel model;
    model.topo = pair.topo;
    model.n = pair.n;
    for (const auto& layer : pair.base) {
        model.layers.push_back({Parameter(layer.weight.value), Parameter(layer.bias.value)});
    }

    std::vector<Tensor> deltas;
    deltas.reserve(static_cast<std::size_t>(pair.n));
    for (int i = 0; i < pair.n; ++i) {
        const Parameter& branch = signature.bits[static_cast<std::size_t>(i)]
                                      ? pair.wm_branches[static_cast<std::size_t>(i)]
                                      : pair.clean_branches[static_cast<std::size_t>(i)];
        deltas.push_back(branch_delta(branch, pair.lora_a));
    }

    Tensor& w0 = model.layers[static_cast<std::size_t>(pair.topo.lora_layer)].weight.value;
    if (options.obfuscate) {
        const Tensor psi = generate_psi(w0, psi_seed, pair.config.obfuscation.psi_scale);
        auto [w0p, deltasp] = obfuscate(w0, deltas, psi);
        w0 = std::move(w0p);
        deltas = std::move(deltasp);
    }
    for (Tensor& d : deltas) model.deltas.emplace_back(std::move(d));

    model.router.w1 = Parameter(pair.router.w1.value);
    model.router.b1 = Parameter(pair.router.b1.value);
    model.router.w2 = Parameter(pair.router.w2.value);
    model.router.b2 = Parameter(pair.router.b2.value);

    return artifact_from_user_model(model, minted_at);
}

std::vector<Minted> mint_batch(const ModelPair& pair, SignatureRegistry& registry,
                               const std::vector<std::string>& user_ids, Rng& rng,
                               const std::string& minted_at) {
    // Validate up front so a failure can roll back cleanly.
    for (std::size_t i = 0; i < user_ids.size(); ++i) {
        if (registry.has_user(user_ids[i])) {
            throw DuplicateUserError("mint_batch: user already registered: " + user_ids[i]);
        }
        for (std::size_t j = i + 1; j < user_ids.size(); ++j) {
            if (user_ids[i] == user_ids[j]) {
                throw DuplicateUserError("mint_batch: duplicate user id in batch: " + user_ids[i]);
            }
        }
    }
    SignatureRegistry staged = registry;
    std::vector<Minted> out;
    out.reserve(user_ids.size());
    for (const std::string& user : user_ids) {
        const Signature sig = sample_signature(pair.n, staged, rng);
        const std::uint64_t psi_seed = (static_cast<std::uint64_t>(rng.next_u32()) << 32) | rng.next_u32();
        Artifact artifact = mint(pair, sig, psi_seed, minted_at);
        MintRecord record{user, sig, minted_at, psi_seed, artifact_checksum(artifact)};
        staged.add(record);
        out.push_back({std::move(record), std::move(artifact)});
    }
    registry = std::move(staged);  // all-or-nothing commit
    return out;
}

std::string rfc3339_now() {
    const std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    return buf;
}

}  // namespace markboard
