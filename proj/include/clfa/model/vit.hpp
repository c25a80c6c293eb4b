#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "clfa/core/checkpoint.hpp"
#include "clfa/core/params.hpp"
#include "clfa/synth/image.hpp"

namespace clfa::model {

struct ModelConfig {
    int image_size = 64;
    int patch_size = 8;
    int embed_dim = 64;
    int depth = 4;
    int heads = 4;
    int mlp_ratio = 4;

    int n_patches() const {
        const int g = image_size / patch_size;
        return g * g;
    }
    int n_tokens() const { return n_patches() + 1; }
};

void validate_config(const ModelConfig& cfg);
nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

template <class T>
struct TokenSetT {
    std::vector<T> cls;      // D
    std::vector<T> patches;  // N x D row-major
    int n = 0, d = 0;
};

template <class T>
struct PredictionsT {
    std::array<T, 5> regression{};   // who_cvd_log, age, sbp, tc, bmi
    std::array<T, 3> class_logits{};  // gender, smoking, diabetes (pre-sigmoid)
};

using TokenSet = TokenSetT<float>;
using Predictions = PredictionsT<float>;

// Pre-LN vision transformer with a cls token, learned position embeddings,
// exact-erf GELU and per-task linear heads on the final cls token. Forward
// and backward are hand-written; the Trace carries every intermediate needed
// by backward.
template <class T>
class ViT {
public:
    ModelConfig cfg;
    uint64_t seed = 0;
    core::ParamPack<T> params;

    ViT(const ModelConfig& cfg, uint64_t seed);

    // inference
    TokenSetT<T> extract_features(const T* pixels) const;
    TokenSetT<T> extract_features(const synth::Image& img) const;
    PredictionsT<T> predict(const TokenSetT<T>& tokens) const;
    // heads applied to an arbitrary cls-shaped feature (adapted features etc.)
    PredictionsT<T> predict_cls(const T* cls) const;
    // gradient of the head outputs w.r.t. the cls feature; parameters untouched
    void predict_cls_input_grad(const T* d_reg, const T* d_cls_logits, T* d_cls) const;
    PredictionsT<T> forward(const T* pixels) const;
    PredictionsT<T> forward(const synth::Image& img) const;

    // training
    struct Trace {
        std::vector<T> patches;  // N x (3*P*P)
        std::vector<T> tokens0;  // M x D, embedded input after pos add
        struct Block {
            std::vector<T> t_in;             // M x D
            std::vector<T> y1, y2;           // LN outputs
            std::vector<T> mean1, rstd1, mean2, rstd2;
            std::vector<T> qkv;              // M x 3D
            std::vector<T> probs;            // H x M x M
            std::vector<T> att;              // M x D (pre-projection)
            std::vector<T> t_mid;            // M x D (after attention residual)
            std::vector<T> u, g;             // M x F pre/post GELU
        };
        std::vector<Block> blocks;
        std::vector<T> t_final;              // M x D (input of final LN)
        std::vector<T> y_final, mean_f, rstd_f;
        TokenSetT<T> tokens;
        PredictionsT<T> preds;
    };

    void forward_trace(const T* pixels, Trace& tr) const;
    // d_reg/d_cls_logits: gradients w.r.t. predictions (may be null for zero);
    // d_cls_feature: extra gradient injected directly at the cls feature Z;
    // d_pixels: optional output, gradient w.r.t. input pixels.
    void backward(const Trace& tr, const T* d_reg, const T* d_cls_logits,
                  const T* d_cls_feature, T* d_pixels = nullptr);

    core::Checkpoint to_checkpoint(const std::string& kind) const;
    void load_arrays(const core::Checkpoint& ckpt);
    static ViT<T> from_checkpoint(const core::Checkpoint& ckpt);

    size_t param_count() const { return params.total; }

private:
    void register_params();
    void init_weights();

    // offsets into the pack
    size_t cls_token_, pos_embed_, pe_w_, pe_b_;
    struct BlockOff {
        size_t ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
        size_t ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
    };
    std::vector<BlockOff> blk_;
    size_t norm_g_, norm_b_;
    std::array<size_t, 5> head_r_w_, head_r_b_;
    std::array<size_t, 3> head_c_w_, head_c_b_;

    friend struct ViTTestPeer;
};

extern template class ViT<float>;
extern template class ViT<double>;

// hand-computed parameter count for a config (kept in sync with
// register_params; the unit test cross-checks both)
size_t expected_param_count(const ModelConfig& cfg);

}  // namespace clfa::model
