// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "markboard/config.hpp"
#include "markboard/data.hpp"
#include "markboard/model.hpp"
#include "markboard/training.hpp"

namespace markboard {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// In-memory form of the single-file artifact format. The file is a JSON
/// document {"manifest": {...}, "checksum": "<sha256 hex>"} where the checksum
/// covers the canonicalized (compact, fixed field order) manifest. Tensors are
/// stored as base64 of little-endian IEEE-754 float32 bytes.
///
/// kind "pair" bundles both branch sets, the shared A/router/base, the trigger
/// bank, and the producing config. kind "user" holds the obfuscated base,
/// dense per-branch deltas, and the router; it records neither the signature,
/// the user, the obfuscation matrix, nor any low-rank factor.
struct Artifact {
    int format_version = 1;
    std::string kind;  // "user" | "pair"
    int n = 0;
    Topology topo;
    std::string minted_at;               // user artifacts
    std::vector<TriggerSpec> triggers;   // pair artifacts
    bool has_config = false;             // pair artifacts
    RunConfig config;
    double train_seconds = 0.0;
    std::vector<NamedTensor> tensors;

    const Tensor* find(const std::string& name) const;
    const Tensor& require(const std::string& name) const;
};

std::string serialize_artifact(const Artifact& artifact);
/// Verifies checksum and format version; errors name the cause.
Artifact parse_artifact(const std::string& bytes);
void save_artifact(const Artifact& artifact, const std::string& path);
Artifact load_artifact(const std::string& path);
/// SHA-256 hex of the canonical manifest (the value stored in the file).
std::string artifact_checksum(const Artifact& artifact);

Artifact artifact_from_pair(const ModelPair& pair);
ModelPair pair_from_artifact(const Artifact& artifact);
Artifact artifact_from_user_model(const DistributedModel& model, const std::string& minted_at);
DistributedModel distributed_from_artifact(const Artifact& artifact);

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

}  // namespace markboard
