#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "clfa/core/checkpoint.hpp"
#include "clfa/model/vit.hpp"
#include "clfa/synth/dataset.hpp"
#include "clfa/train/augment.hpp"
#include "clfa/train/losses.hpp"

namespace clfa::train {

enum class BranchVariant { supervised_only, clfa, simsiam };

std::string to_string(BranchVariant v);
BranchVariant branch_variant_from_string(const std::string& s);

struct PretrainConfig {
    model::ModelConfig model;
    int batch_size = 16;
    double learning_rate = 1e-4;
    int epochs = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    bool cosine_lr = false;
    AugmentConfig augment;
    BranchVariant variant = BranchVariant::clfa;
    TaskWeights weights;
    uint64_t seed = 0;

    void validate() const;
};

nlohmann::json pretrain_config_to_json(const PretrainConfig& cfg);

struct MetricRecord {
    int epoch = 0;
    std::string split;
    std::string task;
    double value = 0;
};

void write_history_jsonl(const std::string& path, const std::vector<MetricRecord>& history);

struct PretrainResult {
    core::Checkpoint checkpoint;
    std::vector<MetricRecord> history;
};

struct BatchLossBreakdown {
    double total = 0;       // mean over batch of sup_l + sup_r + lambda * ali
    double supervised = 0;  // mean over batch of sup_l + sup_r
    double alignment = 0;   // mean over batch of the raw alignment term
};

// Forward-only combined objective on a batch of patients; each record must
// carry both eyes. predictor is required for the simsiam variant.
BatchLossBreakdown total_loss(const model::ViT<float>& vit,
                              const std::vector<const synth::PatientRecord*>& batch,
                              const TaskWeights& weights, BranchVariant variant,
                              const SimSiamPredictor<float>* predictor = nullptr);

// Same reduction, plus gradient accumulation into vit.params.grad (and the
// predictor's grads for simsiam). This is the exact path the train loop uses.
BatchLossBreakdown total_loss_backward(model::ViT<float>& vit,
                                       const std::vector<const synth::PatientRecord*>& batch,
                                       const TaskWeights& weights, BranchVariant variant,
                                       SimSiamPredictor<float>* predictor = nullptr);

// Training entry point. Resumes from `resume` when given (same config); the
// checkpoint carries optimizer state, so a resumed run reproduces a straight
// run bit-exactly.
PretrainResult pretrain(const synth::DatasetBundle& data, const PretrainConfig& cfg,
                        const core::Checkpoint* resume = nullptr);

}  // namespace clfa::train
