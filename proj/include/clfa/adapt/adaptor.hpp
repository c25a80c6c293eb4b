#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clfa/core/checkpoint.hpp"
#include "clfa/core/params.hpp"
#include "clfa/model/vit.hpp"

namespace clfa::adapt {

enum class AdaptorVariant { mlp_only, sa_only, sa_plus_mlp };

std::string to_string(AdaptorVariant v);
AdaptorVariant adaptor_variant_from_string(const std::string& s);

// Self-attention camera adaptor: one pre-LN transformer block over the
// backbone's output tokens, then a 2-layer MLP projector on the cls row.
//   T' = MSA(LN(T)) + T;  T_a = MLP(LN(T')) + T';  Z_a = projector(t_a_cls)
// Structural ablations drop one piece: mlp_only projects t_cls directly,
// sa_only runs the block and returns t_a_cls unprojected. Only the tensors a
// variant uses are registered.
//
// The default init is an exact passthrough: attn.proj.weight and
// mlp.fc2.weight start at zero (residuals carry the tokens through untouched)
// and the ReLU projector starts at W1=[I;-I], W2=[I,-I], which is the
// identity bit for bit. The remaining weights are small-random so gradients
// reach every tensor within two steps.
template <class T>
class Adaptor {
public:
    AdaptorVariant variant;
    int dim, heads, mlp_ratio;
    uint64_t seed = 0;
    core::ParamPack<T> params;

    Adaptor(AdaptorVariant variant, int dim, int heads, int mlp_ratio, uint64_t seed,
            bool passthrough_init = true);

    std::vector<T> adapt(const model::TokenSetT<T>& tokens) const;

    struct Trace {
        int m = 0;
        std::vector<T> t_in;              // M x D assembled tokens (cls first)
        std::vector<T> y1, mean1, rstd1;  // block LN1
        std::vector<T> qkv;               // M x 3D
        std::vector<T> probs;             // H x M x M
        std::vector<T> att;               // M x D (pre-projection)
        std::vector<T> t_mid;             // M x D (after attention residual)
        std::vector<T> y2, mean2, rstd2;  // block LN2
        std::vector<T> u, g;              // M x F pre/post GELU
        std::vector<T> t_out;             // M x D
        std::vector<T> p_in;              // D, projector input (cls row)
        std::vector<T> p_u, p_h;          // 2D pre/post ReLU
        std::vector<T> za;                // D
    };

    void forward_trace(const model::TokenSetT<T>& tokens, Trace& tr) const;
    // accumulates parameter gradients; gradients w.r.t. the input tokens are
    // dropped (the backbone stays frozen)
    void backward(const Trace& tr, const T* d_za);

    core::Checkpoint to_checkpoint(const std::string& backbone_hash) const;
    void load_arrays(const core::Checkpoint& ckpt);
    static Adaptor<T> from_checkpoint(const core::Checkpoint& ckpt);

private:
    void register_params();
    void init_weights(bool passthrough);
    bool has_block() const { return variant != AdaptorVariant::mlp_only; }
    bool has_projector() const { return variant != AdaptorVariant::sa_only; }

    size_t ln1_g_ = 0, ln1_b_ = 0, qkv_w_ = 0, qkv_b_ = 0, proj_w_ = 0, proj_b_ = 0;
    size_t ln2_g_ = 0, ln2_b_ = 0, fc1_w_ = 0, fc1_b_ = 0, fc2_w_ = 0, fc2_b_ = 0;
    size_t prj1_w_ = 0, prj1_b_ = 0, prj2_w_ = 0, prj2_b_ = 0;
};

extern template class Adaptor<float>;
extern template class Adaptor<double>;

// target-path prediction: backbone features -> adaptor -> backbone heads
template <class T>
model::PredictionsT<T> predict_target(const model::ViT<T>& backbone, const Adaptor<T>& adaptor,
                                      const synth::Image& img);

// hash over the backbone's parameter tensors (names, dims, float32 data, in
// registration order); ties adaptor checkpoints to the backbone they were
// trained against regardless of any optimizer state stored alongside
template <class T>
uint64_t backbone_param_hash(const model::ViT<T>& vit);

}  // namespace clfa::adapt
