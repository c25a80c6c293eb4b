#include "clfa/adapt/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clfa/core/adam.hpp"
#include "clfa/core/errors.hpp"
#include "clfa/core/kernels.hpp"
#include "clfa/core/rng.hpp"

namespace clfa::adapt {

using namespace clfa::core;

std::string to_string(AdaptLoss v) {
    switch (v) {
        case AdaptLoss::cvd: return "cvd";
        case AdaptLoss::feature: return "feature";
        case AdaptLoss::mkmmd: return "mkmmd";
        case AdaptLoss::cvd_plus_feature: return "cvd_plus_feature";
    }
    return "?";
}

AdaptLoss adapt_loss_from_string(const std::string& s) {
    if (s == "cvd") return AdaptLoss::cvd;
    if (s == "feature") return AdaptLoss::feature;
    if (s == "mkmmd") return AdaptLoss::mkmmd;
    if (s == "cvd_plus_feature") return AdaptLoss::cvd_plus_feature;
    throw ConfigError("adapt: unknown loss '" + s + "'");
}

void AdaptConfig::validate() const {
    if (batch_size < 1) throw ConfigError("adapt: batch_size must be positive");
    if (!(learning_rate > 0)) throw ConfigError("adapt: learning_rate must be positive");
    if (epochs < 0) throw ConfigError("adapt: epochs must be non-negative");
}

nlohmann::json adapt_config_to_json(const AdaptConfig& cfg) {
    return {{"variant", to_string(cfg.variant)},
            {"loss", to_string(cfg.loss)},
            {"batch_size", cfg.batch_size},
            {"learning_rate", cfg.learning_rate},
            {"epochs", cfg.epochs},
            {"beta1", cfg.beta1},
            {"beta2", cfg.beta2},
            {"weight_decay", cfg.weight_decay},
            {"passthrough_init", cfg.passthrough_init},
            {"seed", cfg.seed}};
}

namespace {

double cvd_term(const std::vector<model::Predictions>& pred_s,
                const std::vector<model::Predictions>& pred_t) {
    double acc = 0;
    for (size_t i = 0; i < pred_s.size(); ++i) {
        const double d = double(pred_t[i].regression[0]) - double(pred_s[i].regression[0]);
        acc += d * d;
    }
    return acc / double(pred_s.size());
}

double feature_term(const metrics::FeatureBatch& z_s, const metrics::FeatureBatch& z_a) {
    double acc = 0;
    for (size_t i = 0; i < z_s.n(); ++i) {
        const float* s = z_s.row(i);
        const float* a = z_a.row(i);
        for (int j = 0; j < z_s.d; ++j) {
            const double d = double(a[j]) - double(s[j]);
            acc += d * d;
        }
    }
    return acc / (double(z_s.n()) * double(z_s.d));
}

}  // namespace

double adaptation_loss(AdaptLoss loss, const std::vector<model::Predictions>& pred_s,
                       const std::vector<model::Predictions>& pred_t,
                       const metrics::FeatureBatch& z_s, const metrics::FeatureBatch& z_a) {
    const size_t B = pred_s.size();
    if (B == 0) throw ArgumentError("adaptation_loss: empty batch");
    if (pred_t.size() != B || z_s.n() != B || z_a.n() != B)
        throw ArgumentError("adaptation_loss: batch sizes disagree");
    if (z_s.d != z_a.d) throw ArgumentError("adaptation_loss: feature dims disagree");
    switch (loss) {
        case AdaptLoss::cvd: return cvd_term(pred_s, pred_t);
        case AdaptLoss::feature: return feature_term(z_s, z_a);
        case AdaptLoss::mkmmd: return metrics::mk_mmd(z_s, z_a);
        case AdaptLoss::cvd_plus_feature: return cvd_term(pred_s, pred_t) + feature_term(z_s, z_a);
    }
    throw ArgumentError("adaptation_loss: unknown loss variant");
}

double adaptation_batch_grad(const model::ViT<float>& backbone, Adaptor<float>& adaptor,
                             const std::vector<const model::TokenSet*>& tok_t,
                             const std::vector<model::Predictions>& pred_s,
                             const metrics::FeatureBatch& z_s, AdaptLoss loss) {
    const size_t bsz = tok_t.size();
    if (bsz == 0) throw ArgumentError("adaptation_batch_grad: empty batch");
    if (pred_s.size() != bsz || z_s.n() != bsz)
        throw ArgumentError("adaptation_batch_grad: batch rows disagree");
    const int D = adaptor.dim;

    std::vector<typename Adaptor<float>::Trace> traces(bsz);
    metrics::FeatureBatch za_b;
    za_b.d = D;
    std::vector<model::Predictions> pt_b(bsz);
    for (size_t k = 0; k < bsz; ++k) {
        adaptor.forward_trace(*tok_t[k], traces[k]);
        za_b.add_row(traces[k].za.data(),
                     {z_s.meta[k].patient_id, z_s.meta[k].laterality, 1});
        pt_b[k] = backbone.predict_cls(traces[k].za.data());
    }
    const double loss_v = adaptation_loss(loss, pred_s, pt_b, z_s, za_b);

    std::vector<float> dza(bsz * size_t(D), 0.f);
    const bool want_cvd = loss == AdaptLoss::cvd || loss == AdaptLoss::cvd_plus_feature;
    const bool want_feat = loss == AdaptLoss::feature || loss == AdaptLoss::cvd_plus_feature;
    if (want_cvd) {
        float dreg[5] = {0, 0, 0, 0, 0};
        std::vector<float> row(size_t(D), 0.f);
        for (size_t k = 0; k < bsz; ++k) {
            dreg[0] = float(2.0 * (double(pt_b[k].regression[0]) - double(pred_s[k].regression[0])) /
                            double(bsz));
            backbone.predict_cls_input_grad(dreg, nullptr, row.data());
            add_inplace(size_t(D), dza.data() + k * size_t(D), row.data());
        }
    }
    if (want_feat) {
        const double c = 2.0 / (double(bsz) * double(D));
        for (size_t k = 0; k < bsz; ++k) {
            float* g = dza.data() + k * size_t(D);
            const float* a = za_b.row(k);
            const float* s = z_s.row(k);
            for (int j = 0; j < D; ++j) g[j] += float(c * (double(a[j]) - double(s[j])));
        }
    }
    if (loss == AdaptLoss::mkmmd) {
        // the kernel bank is recomputed per batch and treated as a constant
        const auto bank = metrics::median_heuristic_bank(z_s, za_b);
        std::vector<double> dY;
        metrics::mk_mmd_grad_y(z_s, za_b, bank, dY);
        for (size_t i = 0; i < dY.size(); ++i) dza[i] = float(dY[i]);
    }
    for (size_t k = 0; k < bsz; ++k) adaptor.backward(traces[k], dza.data() + k * size_t(D));
    return loss_v;
}

AdaptResult train_adaptor(const std::vector<synth::PairedSample>& pairs,
                          const model::ViT<float>& backbone, const AdaptConfig& cfg,
                          const std::vector<synth::PairedSample>& val_pairs) {
    cfg.validate();
    if (pairs.empty()) throw DataError("adapt: no paired samples");
    const int D = backbone.cfg.embed_dim;
    const size_t n = pairs.size();

    // frozen paths, computed once: source features/predictions and the
    // target-image tokens the adaptor consumes
    std::vector<model::TokenSet> tok_t(n);
    std::vector<model::Predictions> pred_s(n);
    metrics::FeatureBatch z_s;
    z_s.d = D;
    for (size_t i = 0; i < n; ++i) {
        const auto tok_s = backbone.extract_features(pairs[i].source_image);
        pred_s[i] = backbone.predict(tok_s);
        z_s.add_row(tok_s.cls.data(), {pairs[i].patient_id, pairs[i].laterality, 0});
        tok_t[i] = backbone.extract_features(pairs[i].target_image);
    }

    const bool own_val = !val_pairs.empty();
    const auto& vp = own_val ? val_pairs : pairs;
    std::vector<model::TokenSet> val_tok_store;
    std::vector<metrics::PredRow> val_src(vp.size());
    if (own_val) {
        val_tok_store.resize(vp.size());
        for (size_t i = 0; i < vp.size(); ++i) {
            val_src[i] = {vp[i].patient_id, vp[i].laterality,
                          double(backbone.forward(vp[i].source_image).regression[0])};
            val_tok_store[i] = backbone.extract_features(vp[i].target_image);
        }
    } else {
        for (size_t i = 0; i < n; ++i)
            val_src[i] = {pairs[i].patient_id, pairs[i].laterality,
                          double(pred_s[i].regression[0])};
    }
    const model::TokenSet* val_tok = own_val ? val_tok_store.data() : tok_t.data();

    Adaptor<float> adaptor(cfg.variant, D, backbone.cfg.heads, backbone.cfg.mlp_ratio,
                           derive_seed(cfg.seed, 0x61646170ull), cfg.passthrough_init);
    AdamConfig ac;
    ac.lr = float(cfg.learning_rate);
    ac.beta1 = float(cfg.beta1);
    ac.beta2 = float(cfg.beta2);
    ac.weight_decay = float(cfg.weight_decay);
    Adam<float> opt(adaptor.params.total, ac);

    auto val_consistency = [&]() {
        std::vector<metrics::PredRow> tgt(vp.size());
        for (size_t i = 0; i < vp.size(); ++i) {
            const auto za = adaptor.adapt(val_tok[i]);
            tgt[i] = {vp[i].patient_id, vp[i].laterality,
                      double(backbone.predict_cls(za.data()).regression[0])};
        }
        return metrics::consistency_r2(val_src, tgt);
    };

    std::vector<train::MetricRecord> history;
    history.push_back({0, "val", "consistency_r2", val_consistency()});

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t(0));

    for (int e = 1; e <= cfg.epochs; ++e) {
        Rng shuffle(derive_seed(cfg.seed, 0x73687566ull, uint64_t(e)));
        for (size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.uniform_index(i + 1)]);

        // batch boundaries; a trailing singleton is folded into the previous
        // batch because the mkmmd estimator needs two rows per set
        std::vector<std::pair<size_t, size_t>> batches;
        for (size_t b0 = 0; b0 < n; b0 += size_t(cfg.batch_size))
            batches.push_back({b0, std::min(n, b0 + size_t(cfg.batch_size))});
        if (cfg.loss == AdaptLoss::mkmmd && batches.size() > 1 &&
            batches.back().second - batches.back().first == 1) {
            batches.pop_back();
            batches.back().second = n;
        }

        double loss_sum = 0;
        for (const auto& [b0, b1] : batches) {
            const size_t bsz = b1 - b0;
            adaptor.params.zero_grad();
            std::vector<const model::TokenSet*> tok_b(bsz);
            metrics::FeatureBatch zs_b;
            zs_b.d = D;
            std::vector<model::Predictions> ps_b(bsz);
            for (size_t k = 0; k < bsz; ++k) {
                const size_t i = order[b0 + k];
                tok_b[k] = &tok_t[i];
                zs_b.add_row(z_s.row(i), z_s.meta[i]);
                ps_b[k] = pred_s[i];
            }
            const double loss = adaptation_batch_grad(backbone, adaptor, tok_b, ps_b, zs_b, cfg.loss);
            if (!std::isfinite(loss))
                throw NumericError("adapt: non-finite loss at epoch " + std::to_string(e));
            opt.step(adaptor.params.total, adaptor.params.data.data(),
                     adaptor.params.grad.data());
            loss_sum += loss * double(bsz);
        }
        history.push_back({e, "train", "loss_total", loss_sum / double(n)});
        history.push_back({e, "val", "consistency_r2", val_consistency()});
    }

    auto ckpt = adaptor.to_checkpoint(hash_hex(backbone_param_hash(backbone)));
    ckpt.header["train_config"] = adapt_config_to_json(cfg);
    ckpt.header["epochs_done"] = cfg.epochs;
    return AdaptResult{std::move(adaptor), std::move(ckpt), std::move(history)};
}

}  // namespace clfa::adapt
