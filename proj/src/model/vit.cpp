#include "clfa/model/vit.hpp"

#include <cmath>
#include <cstring>

#include "clfa/core/errors.hpp"
#include "clfa/core/kernels.hpp"
#include "clfa/core/rng.hpp"

namespace clfa::model {

using namespace clfa::core;

void validate_config(const ModelConfig& c) {
    if (c.image_size < 8 || c.patch_size < 1 || c.embed_dim < 1 || c.depth < 1 || c.heads < 1 ||
        c.mlp_ratio < 1)
        throw ConfigError("model: all config dimensions must be positive");
    if (c.image_size % c.patch_size != 0)
        throw ConfigError("model: patch_size must divide image_size");
    if (c.embed_dim % c.heads != 0) throw ConfigError("model: heads must divide embed_dim");
}

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"image_size", c.image_size}, {"patch_size", c.patch_size},
            {"embed_dim", c.embed_dim},   {"depth", c.depth},
            {"heads", c.heads},           {"mlp_ratio", c.mlp_ratio}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.depth = j.at("depth").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    validate_config(c);
    return c;
}

size_t expected_param_count(const ModelConfig& cfg) {
    const size_t D = size_t(cfg.embed_dim);
    const size_t M = size_t(cfg.n_tokens());
    const size_t F = D * size_t(cfg.mlp_ratio);
    const size_t P3 = 3 * size_t(cfg.patch_size) * size_t(cfg.patch_size);
    const size_t per_block = 2 * D                 // ln1
                             + 3 * D * D + 3 * D   // qkv
                             + D * D + D           // attn proj
                             + 2 * D               // ln2
                             + F * D + F           // fc1
                             + D * F + D;          // fc2
    return D * P3 + D        // patch embed
           + D               // cls token
           + M * D           // pos embed
           + size_t(cfg.depth) * per_block
           + 2 * D           // final norm
           + 8 * (D + 1);    // 5 regression + 3 classification heads
}

template <class T>
ViT<T>::ViT(const ModelConfig& cfg_, uint64_t seed_) : cfg(cfg_), seed(seed_) {
    validate_config(cfg);
    register_params();
    params.allocate();
    init_weights();
}

template <class T>
void ViT<T>::register_params() {
    const int D = cfg.embed_dim, M = cfg.n_tokens(), F = D * cfg.mlp_ratio;
    const int P3 = 3 * cfg.patch_size * cfg.patch_size;
    cls_token_ = params.add("cls_token", {1, D});
    pos_embed_ = params.add("pos_embed", {M, D});
    pe_w_ = params.add("patch_embed.weight", {D, P3});
    pe_b_ = params.add("patch_embed.bias", {D});
    blk_.resize(size_t(cfg.depth));
    for (int b = 0; b < cfg.depth; ++b) {
        const std::string p = "blocks." + std::to_string(b) + ".";
        auto& o = blk_[size_t(b)];
        o.ln1_g = params.add(p + "ln1.gamma", {D});
        o.ln1_b = params.add(p + "ln1.beta", {D});
        o.qkv_w = params.add(p + "attn.qkv.weight", {3 * D, D});
        o.qkv_b = params.add(p + "attn.qkv.bias", {3 * D});
        o.proj_w = params.add(p + "attn.proj.weight", {D, D});
        o.proj_b = params.add(p + "attn.proj.bias", {D});
        o.ln2_g = params.add(p + "ln2.gamma", {D});
        o.ln2_b = params.add(p + "ln2.beta", {D});
        o.fc1_w = params.add(p + "mlp.fc1.weight", {F, D});
        o.fc1_b = params.add(p + "mlp.fc1.bias", {F});
        o.fc2_w = params.add(p + "mlp.fc2.weight", {D, F});
        o.fc2_b = params.add(p + "mlp.fc2.bias", {D});
    }
    norm_g_ = params.add("norm.gamma", {D});
    norm_b_ = params.add("norm.beta", {D});
    for (int k = 0; k < 5; ++k) {
        const std::string p = "heads.reg." + std::to_string(k) + ".";
        head_r_w_[size_t(k)] = params.add(p + "weight", {1, D});
        head_r_b_[size_t(k)] = params.add(p + "bias", {1});
    }
    for (int k = 0; k < 3; ++k) {
        const std::string p = "heads.cls." + std::to_string(k) + ".";
        head_c_w_[size_t(k)] = params.add(p + "weight", {1, D});
        head_c_b_[size_t(k)] = params.add(p + "bias", {1});
    }
}

template <class T>
void ViT<T>::init_weights() {
    Rng rng(seed);
    for (const auto& e : params.entries) {
        T* p = params.ptr(e.offset);
        if (e.name.ends_with(".gamma")) {
            for (size_t i = 0; i < e.size; ++i) p[i] = T(1);
        } else if (e.name.ends_with(".beta") || e.name.ends_with(".bias")) {
            for (size_t i = 0; i < e.size; ++i) p[i] = T(0);
        } else {
            for (size_t i = 0; i < e.size; ++i) p[i] = T(0.02 * rng.normal());
        }
    }
}

namespace {

// extract columns [c0, c0+w) of src (rows x cols) into dst (rows x w)
template <class T>
void take_cols(int rows, int cols, const T* src, int c0, int w, T* dst, T scale = T(1)) {
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < w; ++j) dst[size_t(i) * w + j] = scale * src[size_t(i) * cols + c0 + j];
}

template <class T>
void put_cols_add(int rows, int cols, T* dst, int c0, int w, const T* src) {
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < w; ++j) dst[size_t(i) * cols + c0 + j] += src[size_t(i) * w + j];
}

}  // namespace

template <class T>
void ViT<T>::forward_trace(const T* pixels, Trace& tr) const {
    const int S = cfg.image_size, P = cfg.patch_size, G = S / P;
    const int N = cfg.n_patches(), M = N + 1, D = cfg.embed_dim;
    const int H = cfg.heads, dh = D / H, F = D * cfg.mlp_ratio;
    const int P3 = 3 * P * P;
    const T scale = T(1) / std::sqrt(T(dh));

    tr.patches.assign(size_t(N) * P3, T(0));
    for (int gy = 0; gy < G; ++gy)
        for (int gx = 0; gx < G; ++gx) {
            T* row = tr.patches.data() + size_t(gy * G + gx) * P3;
            for (int py = 0; py < P; ++py)
                for (int px = 0; px < P; ++px)
                    for (int c = 0; c < 3; ++c)
                        row[(py * P + px) * 3 + c] =
                            pixels[(size_t(gy * P + py) * S + size_t(gx * P + px)) * 3 + size_t(c)];
        }

    std::vector<T> emb(size_t(N) * D);
    gemm_nt(N, P3, D, tr.patches.data(), params.ptr(pe_w_), emb.data());
    add_bias_rows(N, D, emb.data(), params.ptr(pe_b_));

    tr.tokens0.assign(size_t(M) * D, T(0));
    std::memcpy(tr.tokens0.data(), params.ptr(cls_token_), size_t(D) * sizeof(T));
    std::memcpy(tr.tokens0.data() + D, emb.data(), size_t(N) * D * sizeof(T));
    add_inplace(size_t(M) * D, tr.tokens0.data(), params.ptr(pos_embed_));

    tr.blocks.resize(size_t(cfg.depth));
    std::vector<T> qh(size_t(M) * dh), kh(size_t(M) * dh), vh(size_t(M) * dh);
    std::vector<T> scores(size_t(M) * M), atth(size_t(M) * dh);
    for (int b = 0; b < cfg.depth; ++b) {
        auto& B = tr.blocks[size_t(b)];
        const auto& o = blk_[size_t(b)];
        if (b == 0) B.t_in = tr.tokens0;  // later blocks were filled by the previous iteration
        B.y1.resize(size_t(M) * D);
        B.mean1.resize(size_t(M));
        B.rstd1.resize(size_t(M));
        layernorm_rows(M, D, B.t_in.data(), params.ptr(o.ln1_g), params.ptr(o.ln1_b), B.y1.data(),
                       B.mean1.data(), B.rstd1.data());

        B.qkv.resize(size_t(M) * 3 * D);
        gemm_nt(M, D, 3 * D, B.y1.data(), params.ptr(o.qkv_w), B.qkv.data());
        add_bias_rows(M, 3 * D, B.qkv.data(), params.ptr(o.qkv_b));

        B.probs.assign(size_t(H) * M * M, T(0));
        B.att.assign(size_t(M) * D, T(0));
        for (int h = 0; h < H; ++h) {
            take_cols(M, 3 * D, B.qkv.data(), h * dh, dh, qh.data(), scale);
            take_cols(M, 3 * D, B.qkv.data(), D + h * dh, dh, kh.data());
            take_cols(M, 3 * D, B.qkv.data(), 2 * D + h * dh, dh, vh.data());
            gemm_nt(M, dh, M, qh.data(), kh.data(), scores.data());
            T* probs = B.probs.data() + size_t(h) * M * M;
            softmax_rows(M, M, scores.data(), probs);
            gemm_nn(M, M, dh, probs, vh.data(), atth.data());
            for (int i = 0; i < M; ++i)
                std::memcpy(B.att.data() + size_t(i) * D + size_t(h) * dh,
                            atth.data() + size_t(i) * dh, size_t(dh) * sizeof(T));
        }

        B.t_mid.resize(size_t(M) * D);
        gemm_nt(M, D, D, B.att.data(), params.ptr(o.proj_w), B.t_mid.data());
        add_bias_rows(M, D, B.t_mid.data(), params.ptr(o.proj_b));
        add_inplace(size_t(M) * D, B.t_mid.data(), B.t_in.data());

        B.y2.resize(size_t(M) * D);
        B.mean2.resize(size_t(M));
        B.rstd2.resize(size_t(M));
        layernorm_rows(M, D, B.t_mid.data(), params.ptr(o.ln2_g), params.ptr(o.ln2_b), B.y2.data(),
                       B.mean2.data(), B.rstd2.data());

        B.u.resize(size_t(M) * F);
        gemm_nt(M, D, F, B.y2.data(), params.ptr(o.fc1_w), B.u.data());
        add_bias_rows(M, F, B.u.data(), params.ptr(o.fc1_b));
        B.g.resize(size_t(M) * F);
        gelu(size_t(M) * F, B.u.data(), B.g.data());

        std::vector<T>& out = (b + 1 < cfg.depth) ? tr.blocks[size_t(b) + 1].t_in : tr.t_final;
        out.resize(size_t(M) * D);
        gemm_nt(M, F, D, B.g.data(), params.ptr(o.fc2_w), out.data());
        add_bias_rows(M, D, out.data(), params.ptr(o.fc2_b));
        add_inplace(size_t(M) * D, out.data(), B.t_mid.data());
    }

    tr.y_final.resize(size_t(M) * D);
    tr.mean_f.resize(size_t(M));
    tr.rstd_f.resize(size_t(M));
    layernorm_rows(M, D, tr.t_final.data(), params.ptr(norm_g_), params.ptr(norm_b_),
                   tr.y_final.data(), tr.mean_f.data(), tr.rstd_f.data());

    tr.tokens.n = N;
    tr.tokens.d = D;
    tr.tokens.cls.assign(tr.y_final.begin(), tr.y_final.begin() + D);
    tr.tokens.patches.assign(tr.y_final.begin() + D, tr.y_final.end());
    tr.preds = predict(tr.tokens);
}

template <class T>
TokenSetT<T> ViT<T>::extract_features(const T* pixels) const {
    Trace tr;
    forward_trace(pixels, tr);
    return tr.tokens;
}

template <class T>
TokenSetT<T> ViT<T>::extract_features(const synth::Image& img) const {
    if (img.h != cfg.image_size || img.w != cfg.image_size)
        throw ArgumentError("model: image dimensions do not match config");
    std::vector<T> px(img.px.begin(), img.px.end());
    return extract_features(px.data());
}

template <class T>
PredictionsT<T> ViT<T>::predict(const TokenSetT<T>& tokens) const {
    const int D = cfg.embed_dim;
    if (int(tokens.cls.size()) != D || tokens.d != D || tokens.n != cfg.n_patches())
        throw ArgumentError("model: token set dimensions do not match config");
    return predict_cls(tokens.cls.data());
}

template <class T>
PredictionsT<T> ViT<T>::predict_cls(const T* cls) const {
    const int D = cfg.embed_dim;
    PredictionsT<T> out;
    for (int k = 0; k < 5; ++k) {
        const T* w = params.ptr(head_r_w_[size_t(k)]);
        T acc = *params.ptr(head_r_b_[size_t(k)]);
        for (int j = 0; j < D; ++j) acc += w[j] * cls[size_t(j)];
        out.regression[size_t(k)] = acc;
    }
    for (int k = 0; k < 3; ++k) {
        const T* w = params.ptr(head_c_w_[size_t(k)]);
        T acc = *params.ptr(head_c_b_[size_t(k)]);
        for (int j = 0; j < D; ++j) acc += w[j] * cls[size_t(j)];
        out.class_logits[size_t(k)] = acc;
    }
    return out;
}

template <class T>
void ViT<T>::predict_cls_input_grad(const T* d_reg, const T* d_cls_logits, T* d_cls) const {
    const int D = cfg.embed_dim;
    for (int j = 0; j < D; ++j) d_cls[size_t(j)] = T(0);
    if (d_reg)
        for (int k = 0; k < 5; ++k) {
            const T* w = params.ptr(head_r_w_[size_t(k)]);
            for (int j = 0; j < D; ++j) d_cls[size_t(j)] += d_reg[size_t(k)] * w[j];
        }
    if (d_cls_logits)
        for (int k = 0; k < 3; ++k) {
            const T* w = params.ptr(head_c_w_[size_t(k)]);
            for (int j = 0; j < D; ++j) d_cls[size_t(j)] += d_cls_logits[size_t(k)] * w[j];
        }
}

template <class T>
PredictionsT<T> ViT<T>::forward(const T* pixels) const {
    return predict(extract_features(pixels));
}

template <class T>
PredictionsT<T> ViT<T>::forward(const synth::Image& img) const {
    return predict(extract_features(img));
}

template <class T>
void ViT<T>::backward(const Trace& tr, const T* d_reg, const T* d_cls_logits,
                      const T* d_cls_feature, T* d_pixels) {
    const int S = cfg.image_size, P = cfg.patch_size, G = S / P;
    const int N = cfg.n_patches(), M = N + 1, D = cfg.embed_dim;
    const int H = cfg.heads, dh = D / H, F = D * cfg.mlp_ratio;
    const int P3 = 3 * P * P;
    const T scale = T(1) / std::sqrt(T(dh));

    // gradient w.r.t. the final LN output
    std::vector<T> dyF(size_t(M) * D, T(0));
    const T* cls = tr.tokens.cls.data();
    for (int k = 0; k < 5; ++k) {
        const T gk = d_reg ? d_reg[k] : T(0);
        if (gk == T(0)) continue;
        T* dw = params.gptr(head_r_w_[size_t(k)]);
        const T* w = params.ptr(head_r_w_[size_t(k)]);
        for (int j = 0; j < D; ++j) {
            dw[j] += gk * cls[j];
            dyF[size_t(j)] += gk * w[j];
        }
        *params.gptr(head_r_b_[size_t(k)]) += gk;
    }
    for (int k = 0; k < 3; ++k) {
        const T gk = d_cls_logits ? d_cls_logits[k] : T(0);
        if (gk == T(0)) continue;
        T* dw = params.gptr(head_c_w_[size_t(k)]);
        const T* w = params.ptr(head_c_w_[size_t(k)]);
        for (int j = 0; j < D; ++j) {
            dw[j] += gk * cls[j];
            dyF[size_t(j)] += gk * w[j];
        }
        *params.gptr(head_c_b_[size_t(k)]) += gk;
    }
    if (d_cls_feature)
        for (int j = 0; j < D; ++j) dyF[size_t(j)] += d_cls_feature[j];

    std::vector<T> dT(size_t(M) * D);
    layernorm_rows_backward(M, D, dyF.data(), tr.t_final.data(), params.ptr(norm_g_),
                            tr.mean_f.data(), tr.rstd_f.data(), dT.data(), params.gptr(norm_g_),
                            params.gptr(norm_b_));

    std::vector<T> dx(size_t(M) * D), dg(size_t(M) * F), du(size_t(M) * F), dy(size_t(M) * D);
    std::vector<T> datt(size_t(M) * D), dqkv(size_t(M) * 3 * D);
    std::vector<T> qh(size_t(M) * dh), kh(size_t(M) * dh), vh(size_t(M) * dh);
    std::vector<T> datth(size_t(M) * dh), dP(size_t(M) * M), dS(size_t(M) * M);
    std::vector<T> dslice(size_t(M) * dh);

    for (int b = cfg.depth - 1; b >= 0; --b) {
        const auto& B = tr.blocks[size_t(b)];
        const auto& o = blk_[size_t(b)];

        // MLP branch: out = t_mid + fc2(gelu(fc1(ln2(t_mid))))
        gemm_tn(D, M, F, dT.data(), B.g.data(), params.gptr(o.fc2_w), true);
        colsum_accum(M, D, dT.data(), params.gptr(o.fc2_b));
        gemm_nn(M, D, F, dT.data(), params.ptr(o.fc2_w), dg.data());
        gelu_backward(size_t(M) * F, B.u.data(), dg.data(), du.data());
        gemm_tn(F, M, D, du.data(), B.y2.data(), params.gptr(o.fc1_w), true);
        colsum_accum(M, F, du.data(), params.gptr(o.fc1_b));
        gemm_nn(M, F, D, du.data(), params.ptr(o.fc1_w), dy.data());
        layernorm_rows_backward(M, D, dy.data(), B.t_mid.data(), params.ptr(o.ln2_g),
                                B.mean2.data(), B.rstd2.data(), dx.data(), params.gptr(o.ln2_g),
                                params.gptr(o.ln2_b));
        add_inplace(size_t(M) * D, dT.data(), dx.data());

        // attention branch: t_mid = t_in + proj(att(ln1(t_in)))
        gemm_tn(D, M, D, dT.data(), B.att.data(), params.gptr(o.proj_w), true);
        colsum_accum(M, D, dT.data(), params.gptr(o.proj_b));
        gemm_nn(M, D, D, dT.data(), params.ptr(o.proj_w), datt.data());

        std::fill(dqkv.begin(), dqkv.end(), T(0));
        for (int h = 0; h < H; ++h) {
            take_cols(M, 3 * D, B.qkv.data(), h * dh, dh, qh.data(), scale);  // scaled q
            take_cols(M, 3 * D, B.qkv.data(), D + h * dh, dh, kh.data());
            take_cols(M, 3 * D, B.qkv.data(), 2 * D + h * dh, dh, vh.data());
            take_cols(M, D, datt.data(), h * dh, dh, datth.data());
            const T* probs = B.probs.data() + size_t(h) * M * M;

            gemm_nt(M, dh, M, datth.data(), vh.data(), dP.data());
            softmax_rows_backward(M, M, probs, dP.data(), dS.data());

            // dv = P^T * datt_h
            gemm_tn(M, M, dh, probs, datth.data(), dslice.data());
            put_cols_add(M, 3 * D, dqkv.data(), 2 * D + h * dh, dh, dslice.data());
            // dq_raw = scale * (dS * k)
            gemm_nn(M, M, dh, dS.data(), kh.data(), dslice.data());
            for (auto& v : dslice) v *= scale;
            put_cols_add(M, 3 * D, dqkv.data(), h * dh, dh, dslice.data());
            // dk = dS^T * q_scaled
            gemm_tn(M, M, dh, dS.data(), qh.data(), dslice.data());
            put_cols_add(M, 3 * D, dqkv.data(), D + h * dh, dh, dslice.data());
        }

        gemm_tn(3 * D, M, D, dqkv.data(), B.y1.data(), params.gptr(o.qkv_w), true);
        colsum_accum(M, 3 * D, dqkv.data(), params.gptr(o.qkv_b));
        gemm_nn(M, 3 * D, D, dqkv.data(), params.ptr(o.qkv_w), dy.data());
        layernorm_rows_backward(M, D, dy.data(), B.t_in.data(), params.ptr(o.ln1_g),
                                B.mean1.data(), B.rstd1.data(), dx.data(), params.gptr(o.ln1_g),
                                params.gptr(o.ln1_b));
        add_inplace(size_t(M) * D, dT.data(), dx.data());
    }

    // embedding backward
    add_inplace(size_t(D), params.gptr(cls_token_), dT.data());
    add_inplace(size_t(M) * D, params.gptr(pos_embed_), dT.data());
    const T* demb = dT.data() + D;
    gemm_tn(D, N, P3, demb, tr.patches.data(), params.gptr(pe_w_), true);
    colsum_accum(N, D, demb, params.gptr(pe_b_));
    if (d_pixels) {
        std::vector<T> dpatches(size_t(N) * P3);
        gemm_nn(N, D, P3, demb, params.ptr(pe_w_), dpatches.data());
        for (int gy = 0; gy < G; ++gy)
            for (int gx = 0; gx < G; ++gx) {
                const T* row = dpatches.data() + size_t(gy * G + gx) * P3;
                for (int py = 0; py < P; ++py)
                    for (int px = 0; px < P; ++px)
                        for (int c = 0; c < 3; ++c)
                            d_pixels[(size_t(gy * P + py) * S + size_t(gx * P + px)) * 3 +
                                     size_t(c)] += row[(py * P + px) * 3 + c];
            }
    }
}

template <class T>
core::Checkpoint ViT<T>::to_checkpoint(const std::string& kind) const {
    Checkpoint c;
    c.header["format_version"] = Checkpoint::kVersion;
    c.header["kind"] = kind;
    c.header["model_config"] = config_to_json(cfg);
    c.header["seed"] = seed;
    for (const auto& e : params.entries) {
        std::vector<float> buf(e.size);
        const T* p = params.ptr(e.offset);
        for (size_t i = 0; i < e.size; ++i) buf[i] = float(p[i]);
        c.add(e.name, e.dims, buf.data());
    }
    return c;
}

template <class T>
void ViT<T>::load_arrays(const core::Checkpoint& ckpt) {
    for (const auto& e : params.entries) {
        const auto& a = ckpt.get(e.name);
        if (a.data.size() != e.size)
            throw IoError("checkpoint: size mismatch for " + e.name);
        T* p = params.ptr(e.offset);
        for (size_t i = 0; i < e.size; ++i) p[i] = T(a.data[i]);
    }
}

template <class T>
ViT<T> ViT<T>::from_checkpoint(const core::Checkpoint& ckpt) {
    ModelConfig cfg = config_from_json(ckpt.header.at("model_config"));
    ViT<T> vit(cfg, ckpt.header.value("seed", uint64_t(0)));
    vit.load_arrays(ckpt);
    return vit;
}

template class ViT<float>;
template class ViT<double>;

}  // namespace clfa::model
