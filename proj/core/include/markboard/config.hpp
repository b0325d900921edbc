// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace markboard {

struct DataConfig {
    int image_size = 16;
    int classes = 10;
    int train_per_class = 400;
    int test_per_class = 100;
    float noise_sigma = 0.25f;   // interior pixels
    float border_sigma = 0.05f;  // border ring (the trigger zone)
};

struct ModelConfig {
    std::vector<int> hidden = {128, 64};
    int lora_layer = 1;  // index of the LoRA-bearing dense layer
    int rank = 4;
    int bits = 10;
    int router_hidden = 64;
};

struct TriggerConfig {
    int patch = 3;
    float value = 1.0f;
};

struct TrainPhases {
    int epochs_base = 20;
    int epochs_inactive = 30;
    int epochs_warmup = 10;
    int epochs_active = 30;
    int batch_size = 64;
    float lr = 1e-3f;
    double wm_ratio = 0.01;
    float route_consistency_weight = 1.0f;
    float align_weight = 1.0f;
    double accuracy_floor = 0.85;
    double route_accuracy_floor = 0.99;
    double bit_success_floor = 0.9;
    double align_mse_threshold = 1e-2;
    std::vector<int> route_loss_disabled_bits;  // ablation switch
};

struct PolicyConfig {
    double epsilon = 0.7;
    int tau = -1;  // -1 means "use n" (exact match)
    int probe_count = 64;
};

struct ObfuscationConfig {
    float psi_scale = 1.0f;  // sigma = psi_scale * std(W0 entries)
};

struct RunConfig {
    std::uint64_t seed = 42;
    DataConfig data;
    ModelConfig model;
    TriggerConfig trigger;
    TrainPhases train;
    PolicyConfig policy;
    ObfuscationConfig obfuscation;

    std::vector<int> layer_dims() const;
    void validate() const;  // throws ConfigError naming the offending field
};

RunConfig default_run_config();
/// Parses and validates; unknown or ill-typed fields raise ConfigError naming
/// the field path.
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& config);
/// Reads a config file. The MARKBOARD_SEED environment variable, when set,
/// overrides the seed.
RunConfig load_run_config(const std::string& path);

}  // namespace markboard
