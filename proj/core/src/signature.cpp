// SPDX-License-Identifier: Apache-2.0

#include "markboard/signature.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace markboard {

using json = nlohmann::ordered_json;

bool Signature::reserved() const {
    const bool all0 = std::all_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b == 0; });
    const bool all1 = std::all_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b == 1; });
    return all0 || all1;
}

std::string Signature::to_string() const {
    std::string out;
    out.reserve(bits.size());
    for (std::uint8_t b : bits) out.push_back(b ? '1' : '0');
    return out;
}

Signature Signature::parse(const std::string& text) {
    Signature s;
    s.bits.reserve(text.size());
    for (char c : text) {
        if (c != '0' && c != '1') throw DomainError("signature: invalid character in bitstring");
        s.bits.push_back(c == '1' ? 1 : 0);
    }
    if (s.bits.empty()) throw DomainError("signature: empty bitstring");
    return s;
}

bool SignatureRegistry::has_user(const std::string& user_id) const {
    return find_user(user_id) != nullptr;
}

bool SignatureRegistry::has_signature(const Signature& s) const {
    for (const auto& r : records_) {
        if (r.signature == s) return true;
    }
    return false;
}

const MintRecord* SignatureRegistry::find_user(const std::string& user_id) const {
    for (const auto& r : records_) {
        if (r.user_id == user_id) return &r;
    }
    return nullptr;
}

const MintRecord* SignatureRegistry::find_by_checksum(const std::string& checksum) const {
    for (const auto& r : records_) {
        if (r.artifact_checksum == checksum) return &r;
    }
    return nullptr;
}

void SignatureRegistry::add(MintRecord record) {
    if (record.signature.n() != n_) {
        throw DomainError("registry: signature length " + std::to_string(record.signature.n()) +
                          " does not match registry n=" + std::to_string(n_));
    }
    if (record.signature.reserved()) {
        throw DomainError("registry: all-zero/all-one signatures are not distributable");
    }
    if (has_user(record.user_id)) throw DuplicateUserError("registry: user already exists: " + record.user_id);
    if (has_signature(record.signature)) {
        throw DomainError("registry: signature already assigned: " + record.signature.to_string());
    }
    records_.push_back(std::move(record));
}

std::string SignatureRegistry::to_json() const {
    json doc;
    doc["version"] = 1;
    doc["n"] = n_;
    json users = json::array();
    for (const auto& r : records_) {
        users.push_back({{"user_id", r.user_id},
                         {"signature", r.signature.to_string()},
                         {"psi_seed", r.psi_seed},
                         {"minted_at", r.minted_at},
                         {"artifact_checksum", r.artifact_checksum}});
    }
    doc["users"] = std::move(users);
    return doc.dump(2) + "\n";
}

SignatureRegistry SignatureRegistry::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw LoadError(std::string("registry is not valid JSON: ") + e.what());
    }
    try {
        if (doc.at("version").get<int>() != 1) throw LoadError("registry: unsupported version");
        SignatureRegistry reg(doc.at("n").get<int>());
        for (const auto& u : doc.at("users")) {
            MintRecord r;
            r.user_id = u.at("user_id").get<std::string>();
            r.signature = Signature::parse(u.at("signature").get<std::string>());
            r.psi_seed = u.at("psi_seed").get<std::uint64_t>();
            r.minted_at = u.at("minted_at").get<std::string>();
            r.artifact_checksum = u.at("artifact_checksum").get<std::string>();
            reg.add(std::move(r));
        }
        return reg;
    } catch (const json::exception& e) {
        throw LoadError(std::string("registry: missing or ill-typed field: ") + e.what());
    }
}

SignatureRegistry SignatureRegistry::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("registry: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

RegistryLock::RegistryLock(const std::string& registry_path)
    : fd_(::open((registry_path + ".lock").c_str(), O_CREAT | O_RDWR, 0644)) {
    if (fd_ >= 0) ::flock(fd_, LOCK_EX);
}

RegistryLock::~RegistryLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

void SignatureRegistry::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw LoadError("registry: cannot write " + tmp);
        out << to_json();
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw LoadError("registry: cannot move " + tmp + " into place");
    }
}

Signature sample_signature(int n, const SignatureRegistry& registry, Rng& rng) {
    if (n < 2 || n > 62) throw DomainError("sample_signature: n must be in [2,62]");
    const std::uint64_t space = (1ULL << n) - 2;
    if (registry.size() >= space) {
        throw SignatureSpaceExhausted("signature space exhausted: " + std::to_string(space) +
                                      " distributable signatures at n=" + std::to_string(n));
    }
    for (;;) {
        Signature s;
        s.bits.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) s.bits[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(rng.next_u32() & 1u);
        if (s.reserved()) continue;
        if (registry.has_signature(s)) continue;
        return s;
    }
}

}  // namespace markboard
