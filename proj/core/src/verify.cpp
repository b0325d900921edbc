// SPDX-License-Identifier: Apache-2.0

#include "markboard/verify.hpp"

#include <json.hpp>

namespace markboard {

using json = nlohmann::ordered_json;

VerificationPolicy VerificationPolicy::uniform(int n, double epsilon, int tau, int probe_count) {
    VerificationPolicy p;
    p.epsilons.assign(static_cast<std::size_t>(n), epsilon);
    p.tau = tau;
    p.probe_count = probe_count;
    return p;
}

void VerificationPolicy::validate(int classes) const {
    if (epsilons.empty()) throw DomainError("policy: no per-bit thresholds");
    for (double e : epsilons) {
        if (e <= 1.0 / classes || e >= 1.0) {
            throw DomainError("policy: epsilon must lie strictly between 1/classes and 1");
        }
    }
    if (tau < 0 || tau > static_cast<int>(epsilons.size())) {
        throw DomainError("policy: tau out of [0, n]");
    }
    if (probe_count <= 0) throw DomainError("policy: probe_count must be positive");
}

double probe_bit(const ForwardFn& model, const Tensor& probes, int target) {
    if (probes.rows() == 0) throw DomainError("probe_bit: empty probe set");
    const Tensor logits = model(probes);
    const auto preds = argmax_rows(logits);
    std::size_t hits = 0;
    for (int p : preds) hits += (p == target);
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::vector<std::uint8_t> extract_signature(const ForwardFn& model, const TriggerBank& bank,
                                            const VerificationPolicy& policy,
                                            std::vector<double>* rates_out) {
    if (bank.n() == 0) throw DomainError("extract_signature: empty trigger bank");
    if (static_cast<int>(policy.epsilons.size()) != bank.n()) {
        throw DimensionError("extract_signature: policy thresholds do not match bank size");
    }
    std::vector<std::uint8_t> bits;
    bits.reserve(static_cast<std::size_t>(bank.n()));
    if (rates_out) rates_out->clear();
    for (int i = 0; i < bank.n(); ++i) {
        const double rate = probe_bit(model, bank.probes[static_cast<std::size_t>(i)],
                                      bank.targets[static_cast<std::size_t>(i)]);
        if (rates_out) rates_out->push_back(rate);
        bits.push_back(rate > policy.epsilons[static_cast<std::size_t>(i)] ? 1 : 0);
    }
    return bits;
}

int match_score(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    if (a.size() != b.size()) throw DimensionError("match_score: signature lengths differ");
    int score = 0;
    for (std::size_t i = 0; i < a.size(); ++i) score += (a[i] == b[i]);
    return score;
}

Attribution attribute(const std::vector<std::uint8_t>& extracted, const SignatureRegistry& registry) {
    if (registry.size() == 0) throw DomainError("attribute: empty registry");
    Attribution best;
    bool first = true;
    for (const auto& record : registry.records()) {
        const int score = match_score(extracted, record.signature.bits);
        if (first || score > best.score) {
            best = {record.user_id, score, false};
            first = false;
        } else if (score == best.score) {
            best.ambiguous = true;
            if (record.user_id < best.user) best.user = record.user_id;
        }
    }
    return best;
}

LeakFlag flag_leak(const std::vector<std::uint8_t>& extracted, const SignatureRegistry& registry,
                   int tau) {
    const Attribution best = attribute(extracted, registry);
    return {best.score >= tau, best.score, best.user};
}

std::string VerificationReport::to_json() const {
    json doc;
    doc["rates"] = rates;
    std::string bits;
    for (std::uint8_t b : extracted) bits.push_back(b ? '1' : '0');
    doc["extracted"] = bits;
    doc["best_user"] = best_user;
    doc["best_score"] = best_score;
    doc["tau"] = tau;
    doc["flagged"] = flagged;
    doc["ambiguous"] = ambiguous;
    return doc.dump();
}

VerificationReport verify_model(const ForwardFn& model, const TriggerBank& bank,
                                const SignatureRegistry& registry, const VerificationPolicy& policy) {
    VerificationReport report;
    report.extracted = extract_signature(model, bank, policy, &report.rates);
    const Attribution best = attribute(report.extracted, registry);
    report.tau = policy.tau;
    report.best_user = best.user;
    report.best_score = best.score;
    report.ambiguous = best.ambiguous;
    report.flagged = best.score >= policy.tau;
    return report;
}

}  // namespace markboard
