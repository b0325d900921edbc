// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "markboard/data.hpp"
#include "markboard/signature.hpp"
#include "markboard/tensor.hpp"

namespace markboard {

/// The only access verification has to a suspect model: a batch of inputs in,
/// a batch of logits out.
using ForwardFn = std::function<Tensor(const Tensor&)>;

struct VerificationPolicy {
    std::vector<double> epsilons;  // per-bit activation thresholds
    int tau = 0;                   // leak threshold on matching bits
    int probe_count = 64;

    static VerificationPolicy uniform(int n, double epsilon, int tau, int probe_count);
    /// epsilons must sit strictly above chance (1/classes); tau <= n.
    void validate(int classes) const;
};

/// Fraction of probe inputs whose argmax class equals the bit's target label.
double probe_bit(const ForwardFn& model, const Tensor& probes, int target);

/// Raw candidate bitstring: bit i is 1 iff its activation rate exceeds
/// epsilon_i. Unlike mint-time signatures, all-zero/all-one is a legal result.
std::vector<std::uint8_t> extract_signature(const ForwardFn& model, const TriggerBank& bank,
                                            const VerificationPolicy& policy,
                                            std::vector<double>* rates_out = nullptr);

/// Number of matching bit positions.
int match_score(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

struct Attribution {
    std::string user;
    int score = 0;
    bool ambiguous = false;
};

/// Best-scoring registered user; ties go to the lexicographically smallest
/// user id and set the ambiguity flag.
Attribution attribute(const std::vector<std::uint8_t>& extracted, const SignatureRegistry& registry);

struct LeakFlag {
    bool flagged = false;
    int best_score = 0;
    std::string best_user;
};

/// Flagged iff some registered signature matches on at least tau bits.
LeakFlag flag_leak(const std::vector<std::uint8_t>& extracted, const SignatureRegistry& registry,
                   int tau);

struct VerificationReport {
    std::vector<double> rates;
    std::vector<std::uint8_t> extracted;
    std::string best_user;
    int best_score = 0;
    int tau = 0;
    bool flagged = false;
    bool ambiguous = false;

    std::string to_json() const;
};

VerificationReport verify_model(const ForwardFn& model, const TriggerBank& bank,
                                const SignatureRegistry& registry, const VerificationPolicy& policy);

}  // namespace markboard
