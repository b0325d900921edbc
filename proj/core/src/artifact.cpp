// SPDX-License-Identifier: Apache-2.0

#include "markboard/artifact.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "markboard/sha256.hpp"

namespace markboard {

using json = nlohmann::ordered_json;

namespace {

const char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string base64_encode(const std::string& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= bytes.size()) {
        const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                                (static_cast<std::uint8_t>(bytes[i + 1]) << 8) |
                                static_cast<std::uint8_t>(bytes[i + 2]);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back(kB64Alphabet[v & 63]);
        i += 3;
    }
    const std::size_t rem = bytes.size() - i;
    if (rem == 1) {
        const std::uint32_t v = static_cast<std::uint8_t>(bytes[i]) << 16;
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (rem == 2) {
        const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                                (static_cast<std::uint8_t>(bytes[i + 1]) << 8);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::string base64_decode(const std::string& text) {
    static int table[256];
    static bool init = [] {
        for (int& v : table) v = -1;
        for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kB64Alphabet[i])] = i;
        return true;
    }();
    (void)init;
    if (text.size() % 4 != 0) throw LoadError("base64: length not a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            const char c = text[i + j];
            if (c == '=') {
                vals[j] = 0;
                ++pad;
            } else {
                vals[j] = table[static_cast<unsigned char>(c)];
                if (vals[j] < 0) throw LoadError("base64: invalid character");
                if (pad) throw LoadError("base64: data after padding");
            }
        }
        const std::uint32_t v = (static_cast<std::uint32_t>(vals[0]) << 18) |
                                (static_cast<std::uint32_t>(vals[1]) << 12) |
                                (static_cast<std::uint32_t>(vals[2]) << 6) |
                                static_cast<std::uint32_t>(vals[3]);
        out.push_back(static_cast<char>((v >> 16) & 0xFF));
        if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xFF));
        if (pad < 1) out.push_back(static_cast<char>(v & 0xFF));
    }
    return out;
}

namespace {

std::string tensor_bytes_le(const Tensor& t) {
    std::string bytes;
    bytes.reserve(t.data.size() * 4);
    for (float f : t.data) {
        const auto u = std::bit_cast<std::uint32_t>(f);
        bytes.push_back(static_cast<char>(u & 0xFF));
        bytes.push_back(static_cast<char>((u >> 8) & 0xFF));
        bytes.push_back(static_cast<char>((u >> 16) & 0xFF));
        bytes.push_back(static_cast<char>((u >> 24) & 0xFF));
    }
    return bytes;
}

Tensor tensor_from_bytes_le(std::vector<int> shape, const std::string& bytes) {
    const std::size_t count = shape_numel(shape);
    if (bytes.size() != count * 4) {
        throw LoadError("tensor payload size does not match its shape");
    }
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t u = static_cast<std::uint8_t>(bytes[4 * i]) |
                                (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[4 * i + 1])) << 8) |
                                (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[4 * i + 2])) << 16) |
                                (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[4 * i + 3])) << 24);
        data[i] = std::bit_cast<float>(u);
    }
    return Tensor(std::move(shape), std::move(data));
}

json topology_to_json(const Topology& topo) {
    return {{"image_size", topo.image_size},
            {"layer_dims", topo.layer_dims},
            {"lora_layer", topo.lora_layer},
            {"router_hidden", topo.router_hidden}};
}

Topology topology_from_json(const json& j) {
    Topology topo;
    topo.image_size = j.at("image_size").get<int>();
    topo.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    topo.lora_layer = j.at("lora_layer").get<int>();
    topo.router_hidden = j.at("router_hidden").get<int>();
    topo.validate();
    return topo;
}

json build_manifest(const Artifact& a) {
    json m;
    m["format_version"] = a.format_version;
    m["kind"] = a.kind;
    m["n"] = a.n;
    m["topology"] = topology_to_json(a.topo);
    if (a.kind == "user") {
        m["minted_at"] = a.minted_at;
    } else if (a.kind == "pair") {
        json trig = json::array();
        for (const auto& t : a.triggers) {
            trig.push_back({{"bit", t.bit},
                            {"row", t.row},
                            {"col", t.col},
                            {"size", t.size},
                            {"value", t.value},
                            {"target", t.target}});
        }
        m["triggers"] = std::move(trig);
        m["train_seconds"] = a.train_seconds;
        if (a.has_config) m["config"] = json::parse(run_config_to_json(a.config));
    }
    json tensors = json::array();
    for (const auto& nt : a.tensors) {
        tensors.push_back({{"name", nt.name},
                           {"shape", nt.tensor.shape},
                           {"dtype", "f32"},
                           {"data", base64_encode(tensor_bytes_le(nt.tensor))}});
    }
    m["tensors"] = std::move(tensors);
    return m;
}

}  // namespace

const Tensor* Artifact::find(const std::string& name) const {
    for (const auto& nt : tensors) {
        if (nt.name == name) return &nt.tensor;
    }
    return nullptr;
}

const Tensor& Artifact::require(const std::string& name) const {
    const Tensor* t = find(name);
    if (!t) throw LoadError("artifact is missing tensor " + name);
    return *t;
}

std::string artifact_checksum(const Artifact& artifact) {
    return sha256_hex(build_manifest(artifact).dump());
}

std::string serialize_artifact(const Artifact& artifact) {
    json manifest = build_manifest(artifact);
    const std::string checksum = sha256_hex(manifest.dump());
    json doc;
    doc["manifest"] = std::move(manifest);
    doc["checksum"] = checksum;
    return doc.dump() + "\n";
}

Artifact parse_artifact(const std::string& bytes) {
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed artifact file (truncated or not JSON): ") + e.what());
    }
    if (!doc.contains("manifest") || !doc.contains("checksum")) {
        throw LoadError("artifact file is missing manifest or checksum");
    }
    const json& manifest = doc.at("manifest");
    const std::string stored = doc.at("checksum").get<std::string>();
    const std::string actual = sha256_hex(manifest.dump());
    if (stored != actual) {
        throw LoadError("artifact checksum mismatch: stored " + stored + ", computed " + actual);
    }
    Artifact a;
    try {
        a.format_version = manifest.at("format_version").get<int>();
        if (a.format_version != 1) {
            throw LoadError("unsupported artifact format version " +
                            std::to_string(a.format_version));
        }
        a.kind = manifest.at("kind").get<std::string>();
        if (a.kind != "user" && a.kind != "pair") throw LoadError("unknown artifact kind " + a.kind);
        a.n = manifest.at("n").get<int>();
        a.topo = topology_from_json(manifest.at("topology"));
        if (a.kind == "user") {
            a.minted_at = manifest.at("minted_at").get<std::string>();
        } else {
            for (const auto& t : manifest.at("triggers")) {
                TriggerSpec s;
                s.bit = t.at("bit").get<int>();
                s.row = t.at("row").get<int>();
                s.col = t.at("col").get<int>();
                s.size = t.at("size").get<int>();
                s.value = t.at("value").get<float>();
                s.target = t.at("target").get<int>();
                a.triggers.push_back(s);
            }
            a.train_seconds = manifest.at("train_seconds").get<double>();
            if (manifest.contains("config")) {
                a.config = run_config_from_json(manifest.at("config").dump());
                a.has_config = true;
            }
        }
        for (const auto& t : manifest.at("tensors")) {
            NamedTensor nt;
            nt.name = t.at("name").get<std::string>();
            if (t.at("dtype").get<std::string>() != "f32") {
                throw LoadError("tensor " + nt.name + " has unsupported dtype");
            }
            nt.tensor = tensor_from_bytes_le(t.at("shape").get<std::vector<int>>(),
                                             base64_decode(t.at("data").get<std::string>()));
            a.tensors.push_back(std::move(nt));
        }
    } catch (const json::exception& e) {
        throw LoadError(std::string("artifact manifest is missing a field: ") + e.what());
    }
    return a;
}

void save_artifact(const Artifact& artifact, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write artifact to " + path);
    out << serialize_artifact(artifact);
}

Artifact load_artifact(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open artifact file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_artifact(ss.str());
}

Artifact artifact_from_pair(const ModelPair& pair) {
    Artifact a;
    a.kind = "pair";
    a.n = pair.n;
    a.topo = pair.topo;
    a.triggers = pair.triggers;
    a.config = pair.config;
    a.has_config = true;
    a.train_seconds = pair.train_seconds;
    for (std::size_t i = 0; i < pair.base.size(); ++i) {
        a.tensors.push_back({"base." + std::to_string(i) + ".weight", pair.base[i].weight.value});
        a.tensors.push_back({"base." + std::to_string(i) + ".bias", pair.base[i].bias.value});
    }
    a.tensors.push_back({"lora.A", pair.lora_a.value});
    for (int i = 0; i < pair.n; ++i) {
        a.tensors.push_back({"lora.clean." + std::to_string(i),
                             pair.clean_branches[static_cast<std::size_t>(i)].value});
    }
    for (int i = 0; i < pair.n; ++i) {
        a.tensors.push_back({"lora.wm." + std::to_string(i),
                             pair.wm_branches[static_cast<std::size_t>(i)].value});
    }
    a.tensors.push_back({"router.fc1.weight", pair.router.w1.value});
    a.tensors.push_back({"router.fc1.bias", pair.router.b1.value});
    a.tensors.push_back({"router.fc2.weight", pair.router.w2.value});
    a.tensors.push_back({"router.fc2.bias", pair.router.b2.value});
    for (int i = 0; i < pair.bank.n(); ++i) {
        a.tensors.push_back({"bank." + std::to_string(i) + ".inputs",
                             pair.bank.probes[static_cast<std::size_t>(i)]});
    }
    return a;
}

ModelPair pair_from_artifact(const Artifact& a) {
    if (a.kind != "pair") throw LoadError("expected a pair artifact, got kind " + a.kind);
    ModelPair pair;
    pair.topo = a.topo;
    pair.n = a.n;
    pair.triggers = a.triggers;
    if (a.has_config) pair.config = a.config;
    pair.train_seconds = a.train_seconds;
    for (int i = 0; i < pair.topo.num_layers(); ++i) {
        DenseLayer layer;
        layer.weight = Parameter(a.require("base." + std::to_string(i) + ".weight"), true);
        layer.bias = Parameter(a.require("base." + std::to_string(i) + ".bias"), true);
        pair.base.push_back(std::move(layer));
    }
    pair.lora_a = Parameter(a.require("lora.A"), true);
    pair.rank = pair.lora_a.value.rows();
    for (int i = 0; i < a.n; ++i) {
        pair.clean_branches.emplace_back(a.require("lora.clean." + std::to_string(i)), true);
    }
    for (int i = 0; i < a.n; ++i) {
        pair.wm_branches.emplace_back(a.require("lora.wm." + std::to_string(i)), true);
    }
    pair.router.w1 = Parameter(a.require("router.fc1.weight"), true);
    pair.router.b1 = Parameter(a.require("router.fc1.bias"), true);
    pair.router.w2 = Parameter(a.require("router.fc2.weight"), true);
    pair.router.b2 = Parameter(a.require("router.fc2.bias"), true);
    for (int i = 0; i < a.n; ++i) {
        pair.bank.probes.push_back(a.require("bank." + std::to_string(i) + ".inputs"));
        pair.bank.targets.push_back(a.triggers[static_cast<std::size_t>(i)].target);
    }
    return pair;
}

Artifact artifact_from_user_model(const DistributedModel& model, const std::string& minted_at) {
    Artifact a;
    a.kind = "user";
    a.n = model.n;
    a.topo = model.topo;
    a.minted_at = minted_at;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        a.tensors.push_back({"base." + std::to_string(i) + ".weight", model.layers[i].weight.value});
        a.tensors.push_back({"base." + std::to_string(i) + ".bias", model.layers[i].bias.value});
    }
    for (int i = 0; i < model.n; ++i) {
        a.tensors.push_back({"delta." + std::to_string(i), model.deltas[static_cast<std::size_t>(i)].value});
    }
    a.tensors.push_back({"router.fc1.weight", model.router.w1.value});
    a.tensors.push_back({"router.fc1.bias", model.router.b1.value});
    a.tensors.push_back({"router.fc2.weight", model.router.w2.value});
    a.tensors.push_back({"router.fc2.bias", model.router.b2.value});
    return a;
}

DistributedModel distributed_from_artifact(const Artifact& a) {
    if (a.kind != "user") throw LoadError("expected a user artifact, got kind " + a.kind);
    DistributedModel model;
    model.topo = a.topo;
    model.n = a.n;
    for (int i = 0; i < model.topo.num_layers(); ++i) {
        DenseLayer layer;
        layer.weight = Parameter(a.require("base." + std::to_string(i) + ".weight"));
        layer.bias = Parameter(a.require("base." + std::to_string(i) + ".bias"));
        model.layers.push_back(std::move(layer));
    }
    for (int i = 0; i < a.n; ++i) {
        model.deltas.emplace_back(a.require("delta." + std::to_string(i)));
    }
    model.router.w1 = Parameter(a.require("router.fc1.weight"));
    model.router.b1 = Parameter(a.require("router.fc1.bias"));
    model.router.w2 = Parameter(a.require("router.fc2.weight"));
    model.router.b2 = Parameter(a.require("router.fc2.bias"));
    return model;
}

}  // namespace markboard
