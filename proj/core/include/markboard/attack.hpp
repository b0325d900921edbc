// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "markboard/config.hpp"
#include "markboard/data.hpp"
#include "markboard/model.hpp"
#include "markboard/signature.hpp"
#include "markboard/verify.hpp"

namespace markboard {

// Attacks take the attacker's view: a distributed artifact model. They never
// see the pair, psi seeds, or the registry.

/// Drops the whole LoRA module; the model runs on the obfuscated base alone.
DistributedModel escape_attack(const DistributedModel& model);

/// Hybrid of two user models: base and router from a, the listed branch
/// deltas replaced with b's.
DistributedModel collusion_swap(const DistributedModel& a, const DistributedModel& b,
                                const std::vector<int>& branch_indices);

/// Globally zeroes the smallest-magnitude `rate` fraction of all distributed
/// weights (base, deltas, router, biases).
DistributedModel prune_model(const DistributedModel& model, double rate);

/// Full fine-tuning on a clean-data fraction with the original training
/// hyperparameters; every distributed parameter is trainable.
DistributedModel finetune_model(const DistributedModel& model, const LabeledSet& clean_train,
                                double fraction, int epochs, const TrainPhases& hp,
                                std::uint64_t seed);

struct EvalResult {
    double cdp = 0.0;      // clean data performance (accuracy)
    double bit_acc = 0.0;  // matching bits / n vs the assigned signature
    int id_acc = 0;        // 1 iff attributed to the true user
    std::vector<std::uint8_t> extracted;
    std::string attributed_user;
};

/// CDP, Bit-Acc and Id-Acc of a (possibly attacked) model in one pass.
/// true_user must be registered; its signature is the Bit-Acc reference.
EvalResult evaluate(const ForwardFn& model, const LabeledSet& clean_test, const TriggerBank& bank,
                    const SignatureRegistry& registry, const VerificationPolicy& policy,
                    const std::string& true_user);

struct AttackReport {
    std::string kind;
    std::map<std::string, double> params;
    double cdp_before = 0.0;
    double cdp_after = 0.0;
    double bit_acc = 0.0;
    int id_acc = 0;
    std::string extracted;
    std::string notes;

    std::string to_json() const;
    /// One row of {attack,param,cdp,bit_acc,id_acc}; param picks the named
    /// entry of params (empty for attacks without one).
    std::string to_csv_row(const std::string& param_key) const;
    static std::string csv_header();
};

}  // namespace markboard
