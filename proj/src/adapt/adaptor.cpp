#include "clfa/adapt/adaptor.hpp"

#include <cmath>
#include <cstring>

#include "clfa/core/errors.hpp"
#include "clfa/core/kernels.hpp"
#include "clfa/core/rng.hpp"

namespace clfa::adapt {

using namespace clfa::core;

std::string to_string(AdaptorVariant v) {
    switch (v) {
        case AdaptorVariant::mlp_only: return "mlp_only";
        case AdaptorVariant::sa_only: return "sa_only";
        case AdaptorVariant::sa_plus_mlp: return "sa_plus_mlp";
    }
    return "?";
}

AdaptorVariant adaptor_variant_from_string(const std::string& s) {
    if (s == "mlp_only") return AdaptorVariant::mlp_only;
    if (s == "sa_only") return AdaptorVariant::sa_only;
    if (s == "sa_plus_mlp") return AdaptorVariant::sa_plus_mlp;
    throw ConfigError("adaptor: unknown variant '" + s + "'");
}

template <class T>
Adaptor<T>::Adaptor(AdaptorVariant variant_, int dim_, int heads_, int mlp_ratio_, uint64_t seed_,
                    bool passthrough_init)
    : variant(variant_), dim(dim_), heads(heads_), mlp_ratio(mlp_ratio_), seed(seed_) {
    if (dim < 1 || heads < 1 || mlp_ratio < 1)
        throw ConfigError("adaptor: all dimensions must be positive");
    if (dim % heads != 0) throw ConfigError("adaptor: heads must divide dim");
    register_params();
    params.allocate();
    init_weights(passthrough_init);
}

template <class T>
void Adaptor<T>::register_params() {
    const int D = dim, F = D * mlp_ratio;
    if (has_block()) {
        ln1_g_ = params.add("ln1.gamma", {D});
        ln1_b_ = params.add("ln1.beta", {D});
        qkv_w_ = params.add("attn.qkv.weight", {3 * D, D});
        qkv_b_ = params.add("attn.qkv.bias", {3 * D});
        proj_w_ = params.add("attn.proj.weight", {D, D});
        proj_b_ = params.add("attn.proj.bias", {D});
        ln2_g_ = params.add("ln2.gamma", {D});
        ln2_b_ = params.add("ln2.beta", {D});
        fc1_w_ = params.add("mlp.fc1.weight", {F, D});
        fc1_b_ = params.add("mlp.fc1.bias", {F});
        fc2_w_ = params.add("mlp.fc2.weight", {D, F});
        fc2_b_ = params.add("mlp.fc2.bias", {D});
    }
    if (has_projector()) {
        prj1_w_ = params.add("proj.fc1.weight", {2 * D, D});
        prj1_b_ = params.add("proj.fc1.bias", {2 * D});
        prj2_w_ = params.add("proj.fc2.weight", {D, 2 * D});
        prj2_b_ = params.add("proj.fc2.bias", {D});
    }
}

template <class T>
void Adaptor<T>::init_weights(bool passthrough) {
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
    if (!passthrough) return;
    const int D = dim;
    if (has_block()) {
        std::fill_n(params.ptr(proj_w_), size_t(D) * D, T(0));
        std::fill_n(params.ptr(fc2_w_), size_t(D) * D * mlp_ratio, T(0));
    }
    if (has_projector()) {
        T* w1 = params.ptr(prj1_w_);  // 2D x D
        T* w2 = params.ptr(prj2_w_);  // D x 2D
        std::fill_n(w1, size_t(2 * D) * D, T(0));
        std::fill_n(w2, size_t(D) * 2 * D, T(0));
        for (int j = 0; j < D; ++j) {
            w1[size_t(j) * D + j] = T(1);
            w1[size_t(D + j) * D + j] = T(-1);
            w2[size_t(j) * 2 * D + j] = T(1);
            w2[size_t(j) * 2 * D + D + j] = T(-1);
        }
        std::fill_n(params.ptr(prj1_b_), size_t(2 * D), T(0));
        std::fill_n(params.ptr(prj2_b_), size_t(D), T(0));
    }
}

namespace {

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
void Adaptor<T>::forward_trace(const model::TokenSetT<T>& tokens, Trace& tr) const {
    const int D = dim, H = heads, dh = D / H, F = D * mlp_ratio;
    if (tokens.d != D || int(tokens.cls.size()) != D ||
        tokens.patches.size() != size_t(tokens.n) * size_t(D) || tokens.n < 1)
        throw ArgumentError("adaptor: token dimensions do not match");
    const int M = tokens.n + 1;
    tr.m = M;

    tr.t_in.resize(size_t(M) * D);
    std::memcpy(tr.t_in.data(), tokens.cls.data(), size_t(D) * sizeof(T));
    std::memcpy(tr.t_in.data() + D, tokens.patches.data(), size_t(tokens.n) * D * sizeof(T));

    if (has_block()) {
        const T scale = T(1) / std::sqrt(T(dh));
        tr.y1.resize(size_t(M) * D);
        tr.mean1.resize(size_t(M));
        tr.rstd1.resize(size_t(M));
        layernorm_rows(M, D, tr.t_in.data(), params.ptr(ln1_g_), params.ptr(ln1_b_), tr.y1.data(),
                       tr.mean1.data(), tr.rstd1.data());

        tr.qkv.resize(size_t(M) * 3 * D);
        gemm_nt(M, D, 3 * D, tr.y1.data(), params.ptr(qkv_w_), tr.qkv.data());
        add_bias_rows(M, 3 * D, tr.qkv.data(), params.ptr(qkv_b_));

        tr.probs.assign(size_t(H) * M * M, T(0));
        tr.att.assign(size_t(M) * D, T(0));
        std::vector<T> qh(size_t(M) * dh), kh(size_t(M) * dh), vh(size_t(M) * dh);
        std::vector<T> scores(size_t(M) * M), atth(size_t(M) * dh);
        for (int h = 0; h < H; ++h) {
            take_cols(M, 3 * D, tr.qkv.data(), h * dh, dh, qh.data(), scale);
            take_cols(M, 3 * D, tr.qkv.data(), D + h * dh, dh, kh.data());
            take_cols(M, 3 * D, tr.qkv.data(), 2 * D + h * dh, dh, vh.data());
            gemm_nt(M, dh, M, qh.data(), kh.data(), scores.data());
            T* probs = tr.probs.data() + size_t(h) * M * M;
            softmax_rows(M, M, scores.data(), probs);
            gemm_nn(M, M, dh, probs, vh.data(), atth.data());
            for (int i = 0; i < M; ++i)
                std::memcpy(tr.att.data() + size_t(i) * D + size_t(h) * dh,
                            atth.data() + size_t(i) * dh, size_t(dh) * sizeof(T));
        }

        tr.t_mid.resize(size_t(M) * D);
        gemm_nt(M, D, D, tr.att.data(), params.ptr(proj_w_), tr.t_mid.data());
        add_bias_rows(M, D, tr.t_mid.data(), params.ptr(proj_b_));
        add_inplace(size_t(M) * D, tr.t_mid.data(), tr.t_in.data());

        tr.y2.resize(size_t(M) * D);
        tr.mean2.resize(size_t(M));
        tr.rstd2.resize(size_t(M));
        layernorm_rows(M, D, tr.t_mid.data(), params.ptr(ln2_g_), params.ptr(ln2_b_), tr.y2.data(),
                       tr.mean2.data(), tr.rstd2.data());

        tr.u.resize(size_t(M) * F);
        gemm_nt(M, D, F, tr.y2.data(), params.ptr(fc1_w_), tr.u.data());
        add_bias_rows(M, F, tr.u.data(), params.ptr(fc1_b_));
        tr.g.resize(size_t(M) * F);
        gelu(size_t(M) * F, tr.u.data(), tr.g.data());

        tr.t_out.resize(size_t(M) * D);
        gemm_nt(M, F, D, tr.g.data(), params.ptr(fc2_w_), tr.t_out.data());
        add_bias_rows(M, D, tr.t_out.data(), params.ptr(fc2_b_));
        add_inplace(size_t(M) * D, tr.t_out.data(), tr.t_mid.data());
    }

    const T* cls = has_block() ? tr.t_out.data() : tr.t_in.data();
    if (!has_projector()) {
        tr.za.assign(cls, cls + D);
        return;
    }
    tr.p_in.assign(cls, cls + D);
    tr.p_u.assign(size_t(2 * D), T(0));
    const T* w1 = params.ptr(prj1_w_);
    const T* b1 = params.ptr(prj1_b_);
    for (int k = 0; k < 2 * D; ++k) {
        T acc = b1[k];
        for (int j = 0; j < D; ++j) acc += w1[size_t(k) * D + j] * tr.p_in[size_t(j)];
        tr.p_u[size_t(k)] = acc;
    }
    tr.p_h.resize(size_t(2 * D));
    for (int k = 0; k < 2 * D; ++k) tr.p_h[size_t(k)] = tr.p_u[size_t(k)] > T(0) ? tr.p_u[size_t(k)] : T(0);
    tr.za.assign(size_t(D), T(0));
    const T* w2 = params.ptr(prj2_w_);
    const T* b2 = params.ptr(prj2_b_);
    for (int j = 0; j < D; ++j) {
        T acc = b2[j];
        for (int k = 0; k < 2 * D; ++k) acc += w2[size_t(j) * 2 * D + k] * tr.p_h[size_t(k)];
        tr.za[size_t(j)] = acc;
    }
}

template <class T>
std::vector<T> Adaptor<T>::adapt(const model::TokenSetT<T>& tokens) const {
    Trace tr;
    forward_trace(tokens, tr);
    return std::move(tr.za);
}

template <class T>
void Adaptor<T>::backward(const Trace& tr, const T* d_za) {
    const int D = dim, H = heads, dh = D / H, F = D * mlp_ratio;
    const int M = tr.m;

    std::vector<T> d_pin(size_t(D), T(0));
    if (has_projector()) {
        std::vector<T> d_ph(size_t(2 * D), T(0)), d_pu(size_t(2 * D), T(0));
        const T* w2 = params.ptr(prj2_w_);
        T* gw2 = params.gptr(prj2_w_);
        T* gb2 = params.gptr(prj2_b_);
        for (int j = 0; j < D; ++j) {
            const T g = d_za[j];
            gb2[j] += g;
            for (int k = 0; k < 2 * D; ++k) {
                gw2[size_t(j) * 2 * D + k] += g * tr.p_h[size_t(k)];
                d_ph[size_t(k)] += g * w2[size_t(j) * 2 * D + k];
            }
        }
        for (int k = 0; k < 2 * D; ++k)
            d_pu[size_t(k)] = tr.p_u[size_t(k)] > T(0) ? d_ph[size_t(k)] : T(0);
        const T* w1 = params.ptr(prj1_w_);
        T* gw1 = params.gptr(prj1_w_);
        T* gb1 = params.gptr(prj1_b_);
        for (int k = 0; k < 2 * D; ++k) {
            const T g = d_pu[size_t(k)];
            if (g == T(0)) continue;
            gb1[k] += g;
            for (int j = 0; j < D; ++j) {
                gw1[size_t(k) * D + j] += g * tr.p_in[size_t(j)];
                d_pin[size_t(j)] += g * w1[size_t(k) * D + j];
            }
        }
    } else {
        d_pin.assign(d_za, d_za + D);
    }
    if (!has_block()) return;  // token gradients are dropped

    const T scale = T(1) / std::sqrt(T(dh));
    std::vector<T> dT(size_t(M) * D, T(0));
    std::memcpy(dT.data(), d_pin.data(), size_t(D) * sizeof(T));

    std::vector<T> dx(size_t(M) * D), dg(size_t(M) * F), du(size_t(M) * F), dy(size_t(M) * D);
    std::vector<T> datt(size_t(M) * D), dqkv(size_t(M) * 3 * D, T(0));
    std::vector<T> qh(size_t(M) * dh), kh(size_t(M) * dh), vh(size_t(M) * dh);
    std::vector<T> datth(size_t(M) * dh), dP(size_t(M) * M), dS(size_t(M) * M);
    std::vector<T> dslice(size_t(M) * dh);

    // MLP branch: t_out = t_mid + fc2(gelu(fc1(ln2(t_mid))))
    gemm_tn(D, M, F, dT.data(), tr.g.data(), params.gptr(fc2_w_), true);
    colsum_accum(M, D, dT.data(), params.gptr(fc2_b_));
    gemm_nn(M, D, F, dT.data(), params.ptr(fc2_w_), dg.data());
    gelu_backward(size_t(M) * F, tr.u.data(), dg.data(), du.data());
    gemm_tn(F, M, D, du.data(), tr.y2.data(), params.gptr(fc1_w_), true);
    colsum_accum(M, F, du.data(), params.gptr(fc1_b_));
    gemm_nn(M, F, D, du.data(), params.ptr(fc1_w_), dy.data());
    layernorm_rows_backward(M, D, dy.data(), tr.t_mid.data(), params.ptr(ln2_g_), tr.mean2.data(),
                            tr.rstd2.data(), dx.data(), params.gptr(ln2_g_), params.gptr(ln2_b_));
    add_inplace(size_t(M) * D, dT.data(), dx.data());

    // attention branch: t_mid = t_in + proj(att(ln1(t_in)))
    gemm_tn(D, M, D, dT.data(), tr.att.data(), params.gptr(proj_w_), true);
    colsum_accum(M, D, dT.data(), params.gptr(proj_b_));
    gemm_nn(M, D, D, dT.data(), params.ptr(proj_w_), datt.data());

    for (int h = 0; h < H; ++h) {
        take_cols(M, 3 * D, tr.qkv.data(), h * dh, dh, qh.data(), scale);  // scaled q
        take_cols(M, 3 * D, tr.qkv.data(), D + h * dh, dh, kh.data());
        take_cols(M, 3 * D, tr.qkv.data(), 2 * D + h * dh, dh, vh.data());
        take_cols(M, D, datt.data(), h * dh, dh, datth.data());
        const T* probs = tr.probs.data() + size_t(h) * M * M;

        gemm_nt(M, dh, M, datth.data(), vh.data(), dP.data());
        softmax_rows_backward(M, M, probs, dP.data(), dS.data());

        gemm_tn(M, M, dh, probs, datth.data(), dslice.data());
        put_cols_add(M, 3 * D, dqkv.data(), 2 * D + h * dh, dh, dslice.data());
        gemm_nn(M, M, dh, dS.data(), kh.data(), dslice.data());
        for (auto& v : dslice) v *= scale;
        put_cols_add(M, 3 * D, dqkv.data(), h * dh, dh, dslice.data());
        gemm_tn(M, M, dh, dS.data(), qh.data(), dslice.data());
        put_cols_add(M, 3 * D, dqkv.data(), D + h * dh, dh, dslice.data());
    }

    gemm_tn(3 * D, M, D, dqkv.data(), tr.y1.data(), params.gptr(qkv_w_), true);
    colsum_accum(M, 3 * D, dqkv.data(), params.gptr(qkv_b_));
    gemm_nn(M, 3 * D, D, dqkv.data(), params.ptr(qkv_w_), dy.data());
    // dx is needed only for dgamma/dbeta accumulation; the token gradient is
    // dropped because nothing upstream of the adaptor trains
    layernorm_rows_backward(M, D, dy.data(), tr.t_in.data(), params.ptr(ln1_g_), tr.mean1.data(),
                            tr.rstd1.data(), dx.data(), params.gptr(ln1_g_), params.gptr(ln1_b_));
}

template <class T>
core::Checkpoint Adaptor<T>::to_checkpoint(const std::string& backbone_hash) const {
    Checkpoint c;
    c.header["format_version"] = Checkpoint::kVersion;
    c.header["kind"] = "adaptor";
    c.header["variant"] = to_string(variant);
    c.header["dim"] = dim;
    c.header["heads"] = heads;
    c.header["mlp_ratio"] = mlp_ratio;
    c.header["seed"] = seed;
    c.header["backbone_hash"] = backbone_hash;
    for (const auto& e : params.entries) {
        std::vector<float> buf(e.size);
        const T* p = params.ptr(e.offset);
        for (size_t i = 0; i < e.size; ++i) buf[i] = float(p[i]);
        c.add(e.name, e.dims, buf.data());
    }
    return c;
}

template <class T>
void Adaptor<T>::load_arrays(const core::Checkpoint& ckpt) {
    for (const auto& e : params.entries) {
        const auto& a = ckpt.get(e.name);
        if (a.data.size() != e.size) throw IoError("checkpoint: size mismatch for " + e.name);
        T* p = params.ptr(e.offset);
        for (size_t i = 0; i < e.size; ++i) p[i] = T(a.data[i]);
    }
}

template <class T>
Adaptor<T> Adaptor<T>::from_checkpoint(const core::Checkpoint& ckpt) {
    if (ckpt.header.value("kind", std::string()) != "adaptor")
        throw IoError("checkpoint: expected kind 'adaptor'");
    Adaptor<T> a(adaptor_variant_from_string(ckpt.header.at("variant").get<std::string>()),
                 ckpt.header.at("dim").get<int>(), ckpt.header.at("heads").get<int>(),
                 ckpt.header.at("mlp_ratio").get<int>(),
                 ckpt.header.value("seed", uint64_t(0)), /*passthrough_init=*/false);
    a.load_arrays(ckpt);
    return a;
}

template <class T>
model::PredictionsT<T> predict_target(const model::ViT<T>& backbone, const Adaptor<T>& adaptor,
                                      const synth::Image& img) {
    if (adaptor.dim != backbone.cfg.embed_dim)
        throw ArgumentError("adaptor: dim does not match backbone embed_dim");
    const auto tokens = backbone.extract_features(img);
    const auto za = adaptor.adapt(tokens);
    return backbone.predict_cls(za.data());
}

template <class T>
uint64_t backbone_param_hash(const model::ViT<T>& vit) {
    std::vector<uint8_t> bytes;
    for (const auto& e : vit.params.entries) {
        bytes.insert(bytes.end(), e.name.begin(), e.name.end());
        for (int d : e.dims) {
            const auto* p = reinterpret_cast<const uint8_t*>(&d);
            bytes.insert(bytes.end(), p, p + sizeof(int));
        }
        const T* src = vit.params.ptr(e.offset);
        for (size_t i = 0; i < e.size; ++i) {
            const float f = float(src[i]);
            const auto* p = reinterpret_cast<const uint8_t*>(&f);
            bytes.insert(bytes.end(), p, p + sizeof(float));
        }
    }
    return fnv1a64(bytes.data(), bytes.size());
}

template class Adaptor<float>;
template class Adaptor<double>;
template model::PredictionsT<float> predict_target(const model::ViT<float>&,
                                                   const Adaptor<float>&, const synth::Image&);
template model::PredictionsT<double> predict_target(const model::ViT<double>&,
                                                    const Adaptor<double>&, const synth::Image&);
template uint64_t backbone_param_hash(const model::ViT<float>&);
template uint64_t backbone_param_hash(const model::ViT<double>&);

}  // namespace clfa::adapt
