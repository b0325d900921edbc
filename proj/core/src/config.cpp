// SPDX-License-Identifier: Apache-2.0

#include "markboard/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "markboard/errors.hpp"

namespace markboard {

using json = nlohmann::ordered_json;

std::vector<int> RunConfig::layer_dims() const {
    std::vector<int> dims;
    dims.push_back(data.image_size * data.image_size);
    dims.insert(dims.end(), model.hidden.begin(), model.hidden.end());
    dims.push_back(data.classes);
    return dims;
}

void RunConfig::validate() const {
    auto positive = [](long long v, const char* field) {
        if (v <= 0) throw ConfigError(std::string("config field ") + field + " must be positive");
    };
    positive(data.image_size, "data.image_size");
    positive(data.classes, "data.classes");
    positive(data.train_per_class, "data.train_per_class");
    positive(data.test_per_class, "data.test_per_class");
    if (data.noise_sigma < 0.0f) throw ConfigError("config field data.noise_sigma must be >= 0");
    if (data.border_sigma < 0.0f) throw ConfigError("config field data.border_sigma must be >= 0");
    if (model.hidden.empty()) throw ConfigError("config field model.hidden must be non-empty");
    for (int h : model.hidden) positive(h, "model.hidden");
    const int num_layers = static_cast<int>(model.hidden.size()) + 1;
    if (model.lora_layer < 0 || model.lora_layer >= num_layers) {
        throw ConfigError("config field model.lora_layer out of range");
    }
    positive(model.rank, "model.rank");
    positive(model.bits, "model.bits");
    positive(model.router_hidden, "model.router_hidden");
    positive(trigger.patch, "trigger.patch");
    auto nonneg = [](long long v, const char* field) {
        if (v < 0) throw ConfigError(std::string("config field ") + field + " must be >= 0");
    };
    nonneg(train.epochs_base, "train.epochs_base");
    nonneg(train.epochs_inactive, "train.epochs_inactive");
    nonneg(train.epochs_warmup, "train.epochs_warmup");
    nonneg(train.epochs_active, "train.epochs_active");
    positive(train.batch_size, "train.batch_size");
    if (train.lr <= 0.0f) throw ConfigError("config field train.lr must be positive");
    if (train.wm_ratio <= 0.0 || train.wm_ratio > 1.0) {
        throw ConfigError("config field train.wm_ratio must be in (0,1]");
    }
    if (train.route_consistency_weight < 0.0f) {
        throw ConfigError("config field train.route_consistency_weight must be >= 0");
    }
    if (train.align_weight < 0.0f) throw ConfigError("config field train.align_weight must be >= 0");
    for (int b : train.route_loss_disabled_bits) {
        if (b < 0 || b >= model.bits) {
            throw ConfigError("config field train.route_loss_disabled_bits has a bit out of range");
        }
    }
    if (policy.epsilon <= 1.0 / data.classes || policy.epsilon >= 1.0) {
        throw ConfigError("config field policy.epsilon must be in (1/classes, 1)");
    }
    if (policy.tau != -1 && (policy.tau < 0 || policy.tau > model.bits)) {
        throw ConfigError("config field policy.tau out of range");
    }
    positive(policy.probe_count, "policy.probe_count");
    if (obfuscation.psi_scale <= 0.0f) {
        throw ConfigError("config field obfuscation.psi_scale must be positive");
    }
}

RunConfig default_run_config() { return RunConfig{}; }

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& scope) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError("unknown config field " + (scope.empty() ? it.key() : scope + "." + it.key()));
        }
    }
}

template <typename T>
void get_field(const json& obj, const char* key, const std::string& scope, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field " + (scope.empty() ? std::string(key) : scope + "." + key) +
                          " has the wrong type");
    }
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown(doc, {"seed", "data", "model", "trigger", "train", "policy", "obfuscation"}, "");

    RunConfig c;
    get_field(doc, "seed", "", c.seed);
    if (doc.contains("data")) {
        const json& d = doc.at("data");
        reject_unknown(d,
                       {"image_size", "classes", "train_per_class", "test_per_class", "noise_sigma",
                        "border_sigma"},
                       "data");
        get_field(d, "image_size", "data", c.data.image_size);
        get_field(d, "classes", "data", c.data.classes);
        get_field(d, "train_per_class", "data", c.data.train_per_class);
        get_field(d, "test_per_class", "data", c.data.test_per_class);
        get_field(d, "noise_sigma", "data", c.data.noise_sigma);
        get_field(d, "border_sigma", "data", c.data.border_sigma);
    }
    if (doc.contains("model")) {
        const json& m = doc.at("model");
        reject_unknown(m, {"hidden", "lora_layer", "rank", "bits", "router_hidden"}, "model");
        get_field(m, "hidden", "model", c.model.hidden);
        get_field(m, "lora_layer", "model", c.model.lora_layer);
        get_field(m, "rank", "model", c.model.rank);
        get_field(m, "bits", "model", c.model.bits);
        get_field(m, "router_hidden", "model", c.model.router_hidden);
    }
    if (doc.contains("trigger")) {
        const json& t = doc.at("trigger");
        reject_unknown(t, {"patch", "value"}, "trigger");
        get_field(t, "patch", "trigger", c.trigger.patch);
        get_field(t, "value", "trigger", c.trigger.value);
    }
    if (doc.contains("train")) {
        const json& t = doc.at("train");
        reject_unknown(t,
                       {"epochs_base", "epochs_inactive", "epochs_warmup", "epochs_active",
                        "batch_size", "lr", "wm_ratio", "route_consistency_weight", "align_weight",
                        "accuracy_floor", "route_accuracy_floor", "bit_success_floor",
                        "align_mse_threshold", "route_loss_disabled_bits"},
                       "train");
        get_field(t, "epochs_base", "train", c.train.epochs_base);
        get_field(t, "epochs_inactive", "train", c.train.epochs_inactive);
        get_field(t, "epochs_warmup", "train", c.train.epochs_warmup);
        get_field(t, "epochs_active", "train", c.train.epochs_active);
        get_field(t, "batch_size", "train", c.train.batch_size);
        get_field(t, "lr", "train", c.train.lr);
        get_field(t, "wm_ratio", "train", c.train.wm_ratio);
        get_field(t, "route_consistency_weight", "train", c.train.route_consistency_weight);
        get_field(t, "align_weight", "train", c.train.align_weight);
        get_field(t, "accuracy_floor", "train", c.train.accuracy_floor);
        get_field(t, "route_accuracy_floor", "train", c.train.route_accuracy_floor);
        get_field(t, "bit_success_floor", "train", c.train.bit_success_floor);
        get_field(t, "align_mse_threshold", "train", c.train.align_mse_threshold);
        get_field(t, "route_loss_disabled_bits", "train", c.train.route_loss_disabled_bits);
    }
    if (doc.contains("policy")) {
        const json& p = doc.at("policy");
        reject_unknown(p, {"epsilon", "tau", "probe_count"}, "policy");
        get_field(p, "epsilon", "policy", c.policy.epsilon);
        get_field(p, "tau", "policy", c.policy.tau);
        get_field(p, "probe_count", "policy", c.policy.probe_count);
    }
    if (doc.contains("obfuscation")) {
        const json& o = doc.at("obfuscation");
        reject_unknown(o, {"psi_scale"}, "obfuscation");
        get_field(o, "psi_scale", "obfuscation", c.obfuscation.psi_scale);
    }
    c.validate();
    return c;
}

std::string run_config_to_json(const RunConfig& c) {
    json doc;
    doc["seed"] = c.seed;
    doc["data"] = {{"image_size", c.data.image_size},
                   {"classes", c.data.classes},
                   {"train_per_class", c.data.train_per_class},
                   {"test_per_class", c.data.test_per_class},
                   {"noise_sigma", c.data.noise_sigma},
                   {"border_sigma", c.data.border_sigma}};
    doc["model"] = {{"hidden", c.model.hidden},
                    {"lora_layer", c.model.lora_layer},
                    {"rank", c.model.rank},
                    {"bits", c.model.bits},
                    {"router_hidden", c.model.router_hidden}};
    doc["trigger"] = {{"patch", c.trigger.patch}, {"value", c.trigger.value}};
    doc["train"] = {{"epochs_base", c.train.epochs_base},
                    {"epochs_inactive", c.train.epochs_inactive},
                    {"epochs_warmup", c.train.epochs_warmup},
                    {"epochs_active", c.train.epochs_active},
                    {"batch_size", c.train.batch_size},
                    {"lr", c.train.lr},
                    {"wm_ratio", c.train.wm_ratio},
                    {"route_consistency_weight", c.train.route_consistency_weight},
                    {"align_weight", c.train.align_weight},
                    {"accuracy_floor", c.train.accuracy_floor},
                    {"route_accuracy_floor", c.train.route_accuracy_floor},
                    {"bit_success_floor", c.train.bit_success_floor},
                    {"align_mse_threshold", c.train.align_mse_threshold},
                    {"route_loss_disabled_bits", c.train.route_loss_disabled_bits}};
    doc["policy"] = {{"epsilon", c.policy.epsilon},
                     {"tau", c.policy.tau},
                     {"probe_count", c.policy.probe_count}};
    doc["obfuscation"] = {{"psi_scale", c.obfuscation.psi_scale}};
    return doc.dump(2);
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    RunConfig c = run_config_from_json(ss.str());
    if (const char* env = std::getenv("MARKBOARD_SEED")) {
        try {
            c.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("MARKBOARD_SEED is not a valid unsigned integer");
        }
    }
    return c;
}

}  // namespace markboard
