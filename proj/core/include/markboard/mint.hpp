// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "markboard/artifact.hpp"
#include "markboard/signature.hpp"
#include "markboard/training.hpp"

namespace markboard {

struct MintOptions {
    bool obfuscate = true;                 // test-only escape hatch: psi = 0
    bool allow_reserved_signature = false;  // test-only: permit 0...0 / 1...1
};

/// Numerical rank via row elimination in double precision.
int matrix_rank(const Tensor& m, double tol = 1e-6);

/// Random full-rank obfuscation matrix, entries i.i.d. Gaussian with
/// sigma = psi_scale * std(w0 entries). Regenerated deterministically (seed,
/// attempt) on rank deficiency; rescaled if its Frobenius norm leaves
/// [0.5, 2.0] x ||w0||_F.
Tensor generate_psi(const Tensor& w0, std::uint64_t psi_seed, float psi_scale);

/// W0' = W0 + psi, delta_i' = delta_i - psi. Because the routing weights sum
/// to 1, x*(W0' + sum_i w_i delta_i') equals the unobfuscated forward for
/// every input.
std::pair<Tensor, std::vector<Tensor>> obfuscate(const Tensor& w0, const std::vector<Tensor>& deltas,
                                                 const Tensor& psi);

/// Branch-swap minting (no gradients, no retraining): bit i selects the clean
/// branch (0) or the watermarked branch (1); deltas are materialized dense and
/// obfuscated. Deterministic: same (pair, signature, psi_seed, minted_at)
/// yields a byte-identical artifact.
Artifact mint(const ModelPair& pair, const Signature& signature, std::uint64_t psi_seed,
              const std::string& minted_at, const MintOptions& options = {});

struct Minted {
    MintRecord record;
    Artifact artifact;
};

/// One unique signature and artifact per user id; the registry is updated
/// all-or-nothing (a duplicate id or exhaustion rolls the whole batch back).
std::vector<Minted> mint_batch(const ModelPair& pair, SignatureRegistry& registry,
                               const std::vector<std::string>& user_ids, Rng& rng,
                               const std::string& minted_at);

/// Current UTC time as RFC3339.
std::string rfc3339_now();

}  // namespace markboard
