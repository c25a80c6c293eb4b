#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "clfa/adapt/adaptor.hpp"
#include "clfa/metrics/metrics.hpp"
#include "clfa/model/vit.hpp"
#include "clfa/synth/dataset.hpp"
#include "clfa/train/pretrain.hpp"

namespace clfa::adapt {

enum class AdaptLoss { cvd, feature, mkmmd, cvd_plus_feature };

std::string to_string(AdaptLoss v);
AdaptLoss adapt_loss_from_string(const std::string& s);

struct AdaptConfig {
    AdaptorVariant variant = AdaptorVariant::sa_plus_mlp;
    AdaptLoss loss = AdaptLoss::cvd;
    int batch_size = 32;
    double learning_rate = 1e-2;
    int epochs = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    bool passthrough_init = true;
    uint64_t seed = 0;

    void validate() const;
};

nlohmann::json adapt_config_to_json(const AdaptConfig& cfg);

// Batch adaptation objective. cvd compares WHO-CVD predictions pairwise,
// feature compares cls features pairwise, mkmmd compares the two feature
// sets as distributions, cvd_plus_feature is the unweighted sum of the first
// two. Source-side quantities are constants of the optimization.
double adaptation_loss(AdaptLoss loss, const std::vector<model::Predictions>& pred_s,
                       const std::vector<model::Predictions>& pred_t,
                       const metrics::FeatureBatch& z_s, const metrics::FeatureBatch& z_a);

// Forward + backward over one adaptation batch: accumulates parameter
// gradients into adaptor.params.grad and returns the batch loss. tok_t[k] is
// the backbone token set of the k-th target image; pred_s/z_s hold the frozen
// source-side quantities for the same rows.
double adaptation_batch_grad(const model::ViT<float>& backbone, Adaptor<float>& adaptor,
                             const std::vector<const model::TokenSet*>& tok_t,
                             const std::vector<model::Predictions>& pred_s,
                             const metrics::FeatureBatch& z_s, AdaptLoss loss);

struct AdaptResult {
    Adaptor<float> adaptor;
    core::Checkpoint checkpoint;
    std::vector<train::MetricRecord> history;
};

// Trains the adaptor against a frozen backbone on paired samples. The
// history carries per-epoch train loss and validation consistency R²;
// epoch 0 holds the pre-training consistency (with the default passthrough
// init this equals the raw source-path value). Consistency is evaluated on
// val_pairs, or on the training pairs when none are given.
AdaptResult train_adaptor(const std::vector<synth::PairedSample>& pairs,
                          const model::ViT<float>& backbone, const AdaptConfig& cfg,
                          const std::vector<synth::PairedSample>& val_pairs = {});

}  // namespace clfa::adapt
