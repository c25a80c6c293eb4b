#include <clfa/train/pretrain.hpp>

#include <clfa/core/adam.hpp>
#include <clfa/core/errors.hpp>
#include <clfa/core/rng.hpp>
#include <clfa/metrics/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace clfa::train {

std::string to_string(BranchVariant v) {
    switch (v) {
        case BranchVariant::supervised_only: return "supervised_only";
        case BranchVariant::clfa: return "clfa";
        case BranchVariant::simsiam: return "simsiam";
    }
    return "?";
}

BranchVariant branch_variant_from_string(const std::string& s) {
    if (s == "supervised_only") return BranchVariant::supervised_only;
    if (s == "clfa") return BranchVariant::clfa;
    if (s == "simsiam") return BranchVariant::simsiam;
    throw ConfigError("unknown branch variant '" + s + "'");
}

void PretrainConfig::validate() const {
    model::validate_config(model);
    if (batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("pretrain: learning_rate must be > 0");
    if (epochs < 0) throw ConfigError("pretrain: epochs must be >= 0");
    weights.validate();
}

nlohmann::json pretrain_config_to_json(const PretrainConfig& cfg) {
    nlohmann::json j;
    j["model"] = model::config_to_json(cfg.model);
    j["batch_size"] = cfg.batch_size;
    j["learning_rate"] = cfg.learning_rate;
    j["epochs"] = cfg.epochs;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["weight_decay"] = cfg.weight_decay;
    j["cosine_lr"] = cfg.cosine_lr;
    j["augment"] = {{"resize", cfg.augment.resize},
                    {"crop", cfg.augment.crop},
                    {"color_jitter", cfg.augment.color_jitter},
                    {"grayscale", cfg.augment.grayscale}};
    j["variant"] = to_string(cfg.variant);
    j["weights"] = {{"w_rgs", cfg.weights.w_rgs},
                    {"w_cls", cfg.weights.w_cls},
                    {"lambda", cfg.weights.lambda}};
    j["seed"] = cfg.seed;
    return j;
}

void write_history_jsonl(const std::string& path, const std::vector<MetricRecord>& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& r : history) {
        nlohmann::json j{
            {"epoch", r.epoch}, {"split", r.split}, {"task", r.task}, {"value", r.value}};
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("failed writing " + path);
}

namespace {

BatchLossBreakdown run_batch(model::ViT<float>& vit,
                             const std::vector<const synth::PatientRecord*>& batch,
                             const TaskWeights& weights, BranchVariant variant,
                             SimSiamPredictor<float>* predictor, bool do_grad) {
    if (batch.empty()) throw ArgumentError("total_loss: empty batch");
    if (variant == BranchVariant::simsiam && predictor == nullptr)
        throw ArgumentError("total_loss: simsiam variant needs a predictor");
    weights.validate();
    const double inv_b = 1.0 / double(batch.size());
    const int d = vit.cfg.embed_dim;
    BatchLossBreakdown out;
    model::ViT<float>::Trace trL, trR;
    std::vector<float> d_zl, d_zr;
    for (const auto* rec : batch) {
        if (!rec || rec->left.px.empty() || rec->right.px.empty())
            throw DataError("total_loss: batch element is missing a laterality");
        if (rec->left.h != vit.cfg.image_size || rec->right.h != vit.cfg.image_size)
            throw ArgumentError("total_loss: image size does not match model");
        vit.forward_trace(rec->left.px.data(), trL);
        vit.forward_trace(rec->right.px.data(), trR);
        auto supL = supervised_loss(trL.preds, rec->labels, weights);
        auto supR = supervised_loss(trR.preds, rec->labels, weights);

        double ali = 0;
        AlignmentResult ar;
        if (variant == BranchVariant::clfa) {
            ar = alignment_pair_loss(trL.tokens.cls, trR.tokens.cls, supL.total, supR.total);
            ali = ar.loss;
        }

        if (do_grad) {
            std::array<float, 5> dregL{}, dregR{};
            std::array<float, 3> dlogL{}, dlogR{};
            supervised_loss_grad(trL.preds, rec->labels, weights, inv_b, dregL, dlogL);
            supervised_loss_grad(trR.preds, rec->labels, weights, inv_b, dregR, dlogR);
            d_zl.assign(size_t(d), 0.f);
            d_zr.assign(size_t(d), 0.f);
            bool has_ali = false;
            if (variant == BranchVariant::clfa) {
                alignment_pair_grad(trL.tokens.cls, trR.tokens.cls, ar.left_is_student,
                                    weights.lambda * inv_b, d_zl, d_zr);
                has_ali = true;
            } else if (variant == BranchVariant::simsiam) {
                ali = simsiam_alignment_backward(trL.tokens.cls, trR.tokens.cls, *predictor,
                                                 weights.lambda * inv_b, d_zl, d_zr);
                has_ali = true;
            }
            vit.backward(trL, dregL.data(), dlogL.data(), has_ali ? d_zl.data() : nullptr);
            vit.backward(trR, dregR.data(), dlogR.data(), has_ali ? d_zr.data() : nullptr);
        } else if (variant == BranchVariant::simsiam) {
            ali = simsiam_alignment_loss(trL.tokens.cls, trR.tokens.cls, *predictor);
        }

        out.supervised += inv_b * (supL.total + supR.total);
        out.alignment += inv_b * ali;
    }
    out.total = out.supervised + weights.lambda * out.alignment;
    return out;
}

void append_val_r2(std::vector<MetricRecord>& history, int epoch, const model::ViT<float>& vit,
                   const synth::DatasetBundle& data, const std::vector<size_t>& val_idx) {
    if (val_idx.empty()) return;
    std::array<std::vector<double>, 5> yt, yp;
    for (size_t i : val_idx) {
        const auto& rec = data.records[i];
        auto tr = regression_targets(rec.labels);
        for (const synth::Image* img : {&rec.left, &rec.right}) {
            auto pred = vit.forward(*img);
            for (int k = 0; k < 5; ++k) {
                yt[size_t(k)].push_back(tr[size_t(k)]);
                yp[size_t(k)].push_back(double(pred.regression[size_t(k)]));
            }
        }
    }
    for (int k = 0; k < 5; ++k) {
        const auto& y = yt[size_t(k)];
        bool constant = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
        if (y.size() < 2 || constant) continue;  // r2 undefined; skip the record
        history.push_back({epoch, "val", std::string("r2_") + kRegressionTasks[k],
                           metrics::r2(y, yp[size_t(k)])});
    }
}

}  // namespace

BatchLossBreakdown total_loss(const model::ViT<float>& vit,
                              const std::vector<const synth::PatientRecord*>& batch,
                              const TaskWeights& weights, BranchVariant variant,
                              const SimSiamPredictor<float>* predictor) {
    // forward-only pass; the const_casts are safe because do_grad=false never
    // touches parameter or gradient storage
    return run_batch(const_cast<model::ViT<float>&>(vit), batch, weights, variant,
                     const_cast<SimSiamPredictor<float>*>(predictor), false);
}

BatchLossBreakdown total_loss_backward(model::ViT<float>& vit,
                                       const std::vector<const synth::PatientRecord*>& batch,
                                       const TaskWeights& weights, BranchVariant variant,
                                       SimSiamPredictor<float>* predictor) {
    return run_batch(vit, batch, weights, variant, predictor, true);
}

PretrainResult pretrain(const synth::DatasetBundle& data, const PretrainConfig& cfg,
                        const core::Checkpoint* resume) {
    cfg.validate();
    if (data.records.empty()) throw DataError("pretrain: empty dataset");

    model::ViT<float> vit(cfg.model, core::derive_seed(cfg.seed, 0x6D6F64656Cull));
    core::AdamConfig acfg;
    acfg.lr = float(cfg.learning_rate);
    acfg.beta1 = float(cfg.beta1);
    acfg.beta2 = float(cfg.beta2);
    acfg.weight_decay = float(cfg.weight_decay);
    core::Adam<float> opt(vit.params.total, acfg);

    const bool simsiam = cfg.variant == BranchVariant::simsiam;
    SimSiamPredictor<float> predictor(cfg.model.embed_dim, 2 * cfg.model.embed_dim,
                                      core::derive_seed(cfg.seed, 0x70726564ull));
    core::Adam<float> opt_pred(simsiam ? predictor.params.total : 0, acfg);

    int start_epoch = 0;
    if (resume) {
        if (resume->header.value("kind", "") != "backbone")
            throw IoError("pretrain resume: checkpoint is not a backbone checkpoint");
        vit.load_arrays(*resume);
        const auto& m = resume->get("opt.m");
        const auto& v = resume->get("opt.v");
        if (m.data.size() != vit.params.total || v.data.size() != vit.params.total)
            throw IoError("pretrain resume: optimizer state size mismatch");
        opt.m = m.data;
        opt.v = v.data;
        opt.t = resume->header.at("adam_t").get<long long>();
        start_epoch = resume->header.at("epochs_done").get<int>();
        if (simsiam) {
            for (const auto& e : predictor.params.entries) {
                const auto& arr = resume->get("predictor." + e.name);
                if (arr.data.size() != e.size)
                    throw IoError("pretrain resume: predictor array size mismatch");
                std::copy(arr.data.begin(), arr.data.end(), predictor.params.ptr(e.offset));
            }
            opt_pred.m = resume->get("opt_predictor.m").data;
            opt_pred.v = resume->get("opt_predictor.v").data;
            opt_pred.t = opt.t;
        }
    }

    std::vector<size_t> train_idx, val_idx;
    for (size_t i = 0; i < data.records.size(); ++i)
        (data.split[i] == 0 ? train_idx : val_idx).push_back(i);
    if (train_idx.empty()) throw DataError("pretrain: no training patients");

    std::vector<MetricRecord> history;
    std::vector<synth::PatientRecord> aug_storage;
    std::vector<const synth::PatientRecord*> batch;

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        double lr_e = cfg.learning_rate;
        if (cfg.cosine_lr)
            lr_e *= 0.5 * (1.0 + std::cos(M_PI * double(epoch) / double(std::max(1, cfg.epochs))));
        opt.cfg.lr = float(lr_e);
        opt_pred.cfg.lr = float(lr_e);

        std::vector<size_t> order = train_idx;
        core::Rng shuffle_rng(core::derive_seed(cfg.seed, 0x73687566ull, uint64_t(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

        double sum_total = 0, sum_sup = 0, sum_ali = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += size_t(cfg.batch_size)) {
            const size_t nb = std::min(size_t(cfg.batch_size), order.size() - b0);
            batch.clear();
            aug_storage.clear();
            aug_storage.reserve(nb);
            for (size_t k = 0; k < nb; ++k) {
                const auto& rec = data.records[order[b0 + k]];
                if (cfg.augment.any()) {
                    synth::PatientRecord aug = rec;
                    aug.left = apply_augmentations(
                        rec.left, cfg.augment,
                        core::derive_seed(cfg.seed, 0x617567ull, uint64_t(epoch),
                                          uint64_t(rec.patient_id), 0));
                    aug.right = apply_augmentations(
                        rec.right, cfg.augment,
                        core::derive_seed(cfg.seed, 0x617567ull, uint64_t(epoch),
                                          uint64_t(rec.patient_id), 1));
                    aug_storage.push_back(std::move(aug));
                } else {
                    aug_storage.push_back(rec);
                }
            }
            for (const auto& rec : aug_storage) batch.push_back(&rec);

            vit.params.zero_grad();
            if (simsiam) predictor.params.zero_grad();
            auto bd = run_batch(vit, batch, cfg.weights, cfg.variant,
                                simsiam ? &predictor : nullptr, true);
            if (!std::isfinite(bd.total))
                throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", aborting");
            opt.step(vit.params.total, vit.params.data.data(), vit.params.grad.data());
            if (simsiam)
                opt_pred.step(predictor.params.total, predictor.params.data.data(),
                              predictor.params.grad.data());
            sum_total += bd.total * double(nb);
            sum_sup += bd.supervised * double(nb);
            sum_ali += bd.alignment * double(nb);
        }
        const double n = double(order.size());
        history.push_back({epoch, "train", "loss_total", sum_total / n});
        history.push_back({epoch, "train", "loss_supervised", sum_sup / n});
        history.push_back({epoch, "train", "loss_alignment", sum_ali / n});
        append_val_r2(history, epoch, vit, data, val_idx);
    }

    PretrainResult res;
    res.checkpoint = vit.to_checkpoint("backbone");
    res.checkpoint.header["train_config"] = pretrain_config_to_json(cfg);
    res.checkpoint.header["epochs_done"] = cfg.epochs;
    res.checkpoint.header["adam_t"] = opt.t;
    res.checkpoint.add("opt.m", {int(opt.m.size())}, opt.m.data());
    res.checkpoint.add("opt.v", {int(opt.v.size())}, opt.v.data());
    if (simsiam) {
        for (const auto& e : predictor.params.entries)
            res.checkpoint.add("predictor." + e.name, e.dims, predictor.params.ptr(e.offset));
        res.checkpoint.add("opt_predictor.m", {int(opt_pred.m.size())}, opt_pred.m.data());
        res.checkpoint.add("opt_predictor.v", {int(opt_pred.v.size())}, opt_pred.v.data());
    }
    res.history = std::move(history);
    return res;
}

}  // namespace clfa::train
