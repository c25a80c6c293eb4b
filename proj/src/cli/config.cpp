#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "clfa/cli/commands.hpp"
#include "clfa/core/errors.hpp"

namespace clfa::cli {

using nlohmann::json;

namespace {

// json type errors surface as ConfigError with the offending key named
template <class T>
T jget(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: key '" + key + "': " + e.what());
    }
}

template <class T>
T jreq(const json& obj, const std::string& key, const std::string& ctx) {
    if (!obj.contains(key)) throw ConfigError(ctx + ": missing required key '" + key + "'");
    return jget<T>(obj, key, T{});
}

model::ModelConfig model_from_json_strict(const json& j) {
    require_keys(j, {"image_size", "patch_size", "embed_dim", "depth", "heads", "mlp_ratio"},
                 "model");
    model::ModelConfig m;
    m.image_size = jget(j, "image_size", m.image_size);
    m.patch_size = jget(j, "patch_size", m.patch_size);
    m.embed_dim = jget(j, "embed_dim", m.embed_dim);
    m.depth = jget(j, "depth", m.depth);
    m.heads = jget(j, "heads", m.heads);
    m.mlp_ratio = jget(j, "mlp_ratio", m.mlp_ratio);
    return m;
}

train::AugmentConfig augment_from_json_strict(const json& j) {
    require_keys(j,
                 {"resize", "crop", "color_jitter", "grayscale", "crop_scale_min", "zoom_min",
                  "zoom_max", "jitter_strength", "grayscale_prob"},
                 "augment");
    train::AugmentConfig a;
    a.resize = jget(j, "resize", a.resize);
    a.crop = jget(j, "crop", a.crop);
    a.color_jitter = jget(j, "color_jitter", a.color_jitter);
    a.grayscale = jget(j, "grayscale", a.grayscale);
    a.crop_scale_min = jget(j, "crop_scale_min", a.crop_scale_min);
    a.zoom_min = jget(j, "zoom_min", a.zoom_min);
    a.zoom_max = jget(j, "zoom_max", a.zoom_max);
    a.jitter_strength = jget(j, "jitter_strength", a.jitter_strength);
    a.grayscale_prob = jget(j, "grayscale_prob", a.grayscale_prob);
    return a;
}

train::TaskWeights weights_from_json_strict(const json& j) {
    require_keys(j, {"preset", "who_cvd_weight", "w_rgs", "w_cls", "lambda"}, "weights");
    train::TaskWeights w;
    if (j.contains("preset")) {
        const auto preset = jget<std::string>(j, "preset", "");
        if (preset != "weight2")
            throw ConfigError("weights: unknown preset '" + preset + "' (expected 'weight2')");
        w = train::TaskWeights::weight2(jget(j, "who_cvd_weight", 4.0));
    } else if (j.contains("who_cvd_weight")) {
        throw ConfigError("weights: who_cvd_weight requires preset 'weight2'");
    }
    if (j.contains("w_rgs")) {
        auto v = jget<std::vector<double>>(j, "w_rgs", {});
        if (v.size() != 5) throw ConfigError("weights: w_rgs must have 5 entries");
        std::copy(v.begin(), v.end(), w.w_rgs.begin());
    }
    if (j.contains("w_cls")) {
        auto v = jget<std::vector<double>>(j, "w_cls", {});
        if (v.size() != 3) throw ConfigError("weights: w_cls must have 3 entries");
        std::copy(v.begin(), v.end(), w.w_cls.begin());
    }
    w.lambda = jget(j, "lambda", w.lambda);
    return w;
}

}  // namespace

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    try {
        json j = json::parse(in);
        if (!j.is_object()) throw ConfigError("config: " + path + " must hold a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
}

void require_keys(const json& obj, const std::vector<std::string>& allowed,
                  const std::string& ctx) {
    if (!obj.is_object()) throw ConfigError(ctx + ": expected a JSON object");
    for (const auto& item : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            throw ConfigError(ctx + ": unknown key '" + item.key() + "'");
    }
}

std::optional<uint64_t> env_seed_override() {
    const char* s = std::getenv("CLFA_SEED");
    if (s == nullptr || *s == '\0') return std::nullopt;
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (errno != 0 || end == s || *end != '\0')
        throw ConfigError("CLFA_SEED must be an unsigned integer, got '" + std::string(s) + "'");
    return uint64_t(v);
}

synth::CameraProfile profile_from_json_strict(const json& j, const std::string& ctx) {
    require_keys(
        j, {"color_matrix", "blur_sigma", "vignette_strength", "gamma", "noise_sigma", "seed_offset"},
        ctx);
    synth::CameraProfile p;
    if (j.contains("color_matrix")) {
        auto cm = jget<std::vector<float>>(j, "color_matrix", {});
        if (cm.size() != 9) throw ConfigError(ctx + ": color_matrix must have 9 entries");
        std::copy(cm.begin(), cm.end(), p.color_matrix.begin());
    }
    p.blur_sigma = jget(j, "blur_sigma", p.blur_sigma);
    p.vignette_strength = jget(j, "vignette_strength", p.vignette_strength);
    p.gamma = jget(j, "gamma", p.gamma);
    p.noise_sigma = jget(j, "noise_sigma", p.noise_sigma);
    p.seed_offset = jget(j, "seed_offset", p.seed_offset);
    return p;
}

synth::CameraProfile default_target_profile() {
    synth::CameraProfile p;
    p.color_matrix = {0.95f, 0.05f, 0.0f, 0.02f, 0.9f, 0.05f, 0.0f, 0.04f, 0.92f};
    p.blur_sigma = 0.6f;
    p.vignette_strength = 0.3f;
    p.gamma = 1.2f;
    p.noise_sigma = 0.01f;
    p.seed_offset = 77;
    return p;
}

train::PretrainConfig pretrain_config_from_json(const json& cfg) {
    train::PretrainConfig c;
    if (cfg.contains("model")) c.model = model_from_json_strict(cfg.at("model"));
    c.batch_size = jget(cfg, "batch_size", c.batch_size);
    c.learning_rate = jget(cfg, "learning_rate", c.learning_rate);
    c.epochs = jget(cfg, "epochs", c.epochs);
    c.beta1 = jget(cfg, "beta1", c.beta1);
    c.beta2 = jget(cfg, "beta2", c.beta2);
    c.weight_decay = jget(cfg, "weight_decay", c.weight_decay);
    c.cosine_lr = jget(cfg, "cosine_lr", c.cosine_lr);
    if (cfg.contains("augment")) c.augment = augment_from_json_strict(cfg.at("augment"));
    c.variant = train::branch_variant_from_string(jget<std::string>(cfg, "variant", "clfa"));
    if (cfg.contains("weights")) c.weights = weights_from_json_strict(cfg.at("weights"));
    c.seed = jget<uint64_t>(cfg, "seed", c.seed);
    if (auto s = env_seed_override()) c.seed = *s;
    return c;
}

adapt::AdaptConfig adapt_config_from_json(const json& cfg) {
    adapt::AdaptConfig c;
    c.variant = adapt::adaptor_variant_from_string(jget<std::string>(cfg, "variant", "sa_plus_mlp"));
    c.loss = adapt::adapt_loss_from_string(jget<std::string>(cfg, "loss", "cvd"));
    c.batch_size = jget(cfg, "batch_size", c.batch_size);
    c.learning_rate = jget(cfg, "learning_rate", c.learning_rate);
    c.epochs = jget(cfg, "epochs", c.epochs);
    c.beta1 = jget(cfg, "beta1", c.beta1);
    c.beta2 = jget(cfg, "beta2", c.beta2);
    c.weight_decay = jget(cfg, "weight_decay", c.weight_decay);
    c.passthrough_init = jget(cfg, "passthrough_init", c.passthrough_init);
    c.seed = jget<uint64_t>(cfg, "seed", c.seed);
    if (auto s = env_seed_override()) c.seed = *s;
    return c;
}

}  // namespace clfa::cli
