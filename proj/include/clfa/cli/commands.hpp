#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clfa/adapt/train.hpp"
#include "clfa/synth/camera.hpp"
#include "clfa/train/pretrain.hpp"

namespace clfa::cli {

// One experiment = one JSON config file; flags override individual keys.
// Unknown keys and out-of-range values are rejected before any computation.
// CLFA_SEED, when set in the environment, wins over both.

nlohmann::json load_config_file(const std::string& path);

// Throws ConfigError naming the first key of `obj` not in `allowed`.
void require_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                  const std::string& ctx);

std::optional<uint64_t> env_seed_override();

synth::CameraProfile profile_from_json_strict(const nlohmann::json& j, const std::string& ctx);
// Moderately shifted acquisition profile used when gen-data gets no explicit
// target profile: warm color mix, gamma 1.2, vignette, light blur and noise.
synth::CameraProfile default_target_profile();

// Read the training-related keys out of a command config (paths are handled
// by the commands themselves). Nested objects are strictly key-checked here.
train::PretrainConfig pretrain_config_from_json(const nlohmann::json& cfg);
adapt::AdaptConfig adapt_config_from_json(const nlohmann::json& cfg);

void cmd_gen_data(const nlohmann::json& cfg);
void cmd_pretrain(const nlohmann::json& cfg);
void cmd_adapt(const nlohmann::json& cfg);
void cmd_eval(const nlohmann::json& cfg);
void cmd_probe(const nlohmann::json& cfg);
void cmd_export_features(const nlohmann::json& cfg);

// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric/training
// failure.
int run_cli(int argc, const char* const* argv);

}  // namespace clfa::cli
