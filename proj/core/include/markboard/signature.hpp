// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "markboard/errors.hpp"
#include "markboard/rng.hpp"

namespace markboard {

/// No free signatures remain (the distributable space is 2^n - 2).
struct SignatureSpaceExhausted : std::runtime_error {
    explicit SignatureSpaceExhausted(const std::string& what) : std::runtime_error(what) {}
};

struct DuplicateUserError : std::runtime_error {
    explicit DuplicateUserError(const std::string& what) : std::runtime_error(what) {}
};

/// An n-bit model identity. All-zero and all-one strings name the pair models
/// F and F' themselves and are never distributed.
struct Signature {
    std::vector<std::uint8_t> bits;

    int n() const { return static_cast<int>(bits.size()); }
    bool reserved() const;  // all-zero or all-one
    std::string to_string() const;
    static Signature parse(const std::string& text);
    bool operator==(const Signature&) const = default;
};

struct MintRecord {
    std::string user_id;
    Signature signature;
    std::string minted_at;  // RFC3339
    std::uint64_t psi_seed = 0;
    std::string artifact_checksum;
};

/// user -> signature mapping, one record per user, signatures unique.
class SignatureRegistry {
public:
    SignatureRegistry() = default;
    explicit SignatureRegistry(int n) : n_(n) {}

    int n() const { return n_; }
    std::size_t size() const { return records_.size(); }
    const std::vector<MintRecord>& records() const { return records_; }

    bool has_user(const std::string& user_id) const;
    bool has_signature(const Signature& s) const;
    const MintRecord* find_user(const std::string& user_id) const;
    const MintRecord* find_by_checksum(const std::string& checksum) const;

    /// Validates length, uniqueness of user and signature.
    void add(MintRecord record);

    /// JSON registry file {version:1, n, users:[...]}. save() writes via a
    /// temp file + rename; writers serialize with RegistryLock.
    static SignatureRegistry load(const std::string& path);
    void save(const std::string& path) const;
    std::string to_json() const;
    static SignatureRegistry from_json(const std::string& text);

private:
    int n_ = 0;
    std::vector<MintRecord> records_;
};

/// Exclusive flock on <registry>.lock held for the whole load-mint-save cycle.
class RegistryLock {
public:
    explicit RegistryLock(const std::string& registry_path);
    ~RegistryLock();
    RegistryLock(const RegistryLock&) = delete;
    RegistryLock& operator=(const RegistryLock&) = delete;

private:
    int fd_;
};

/// Uniform draw over the 2^n - 2 distributable signatures, excluding ones the
/// registry already holds.
Signature sample_signature(int n, const SignatureRegistry& registry, Rng& rng);

}  // namespace markboard
