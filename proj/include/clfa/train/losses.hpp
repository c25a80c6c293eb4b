#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "clfa/core/params.hpp"
#include "clfa/model/vit.hpp"
#include "clfa/synth/generator.hpp"

namespace clfa::train {

inline constexpr const char* kRegressionTasks[5] = {"who_cvd_log", "age", "sbp", "tc", "bmi"};
inline constexpr const char* kBinaryTasks[3] = {"gender", "smoking", "diabetes"};

struct TaskWeights {
    std::array<double, 5> w_rgs{1, 1, 1, 1, 1};
    std::array<double, 3> w_cls{1, 1, 1};
    double lambda = 1.0;

    void validate() const;
    // the SBP/TC/BMI-free reweighting: those regression weights zeroed and
    // who_cvd_log boosted
    static TaskWeights weight2(double who_cvd_weight = 4.0);
};

std::array<double, 5> regression_targets(const synth::LabelSet& y);
std::array<double, 3> binary_targets(const synth::LabelSet& y);

struct SupervisedBreakdown {
    double total = 0;
    std::array<double, 5> rgs{};  // weighted per-task terms
    std::array<double, 3> cls{};
};

template <class T>
SupervisedBreakdown supervised_loss(const model::PredictionsT<T>& pred, const synth::LabelSet& y,
                                    const TaskWeights& w);

// accumulates the gradient of scale * total w.r.t. raw predictions / logits
template <class T>
void supervised_loss_grad(const model::PredictionsT<T>& pred, const synth::LabelSet& y,
                          const TaskWeights& w, double scale, std::array<T, 5>& d_reg,
                          std::array<T, 3>& d_logit);

struct AlignmentResult {
    double loss = 0;
    bool left_is_student = true;
};

// MSE between student feature and stop-gradient(teacher feature), mean over
// dims; the eye with the larger (or tied) supervised loss is the student
template <class T>
AlignmentResult alignment_pair_loss(const std::vector<T>& z_left, const std::vector<T>& z_right,
                                    double l_sup_left, double l_sup_right);

// accumulates scale * d loss into the student's slot only
template <class T>
void alignment_pair_grad(const std::vector<T>& z_left, const std::vector<T>& z_right,
                         bool left_is_student, double scale, std::vector<T>& d_left,
                         std::vector<T>& d_right);

template <class T>
struct SimSiamPredictor {
    int d = 0;
    int hidden = 0;
    core::ParamPack<T> params;

    SimSiamPredictor(int d, int hidden, uint64_t seed);
    // exact identity mapping; needs hidden == 2 d
    void identity_init();
    void forward(const T* z, T* hid, T* out) const;
};

// 0.5 [ -cos(h(z_l), sg(z_r)) - cos(h(z_r), sg(z_l)) ]
template <class T>
double simsiam_alignment_loss(const std::vector<T>& z_left, const std::vector<T>& z_right,
                              const SimSiamPredictor<T>& h);

// accumulates scale * gradients into d_left / d_right and h.params.grad;
// returns the loss value
template <class T>
double simsiam_alignment_backward(const std::vector<T>& z_left, const std::vector<T>& z_right,
                                  SimSiamPredictor<T>& h, double scale, std::vector<T>& d_left,
                                  std::vector<T>& d_right);

}  // namespace clfa::train
