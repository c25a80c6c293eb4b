#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace clfa::metrics {

struct FeatureMeta {
    long long patient_id = 0;
    int laterality = 0;  // 0 = left, 1 = right
    int camera = 0;      // 0 = source, 1 = target
};

struct FeatureBatch {
    int d = 0;
    std::vector<float> rows;  // n x d
    std::vector<FeatureMeta> meta;

    size_t n() const { return meta.size(); }
    const float* row(size_t i) const { return rows.data() + i * size_t(d); }
    void add_row(const float* v, FeatureMeta m);
};

// 1 - SS_res / SS_tot; may be negative
double r2(const std::vector<double>& y_true, const std::vector<double>& y_pred);

struct PredRow {
    long long patient_id = 0;
    int laterality = 0;
    double value = 0;
};

// r2 with the source-camera predictions as pseudo ground truth; rows must be
// aligned by (patient, laterality)
double consistency_r2(const std::vector<PredRow>& source, const std::vector<PredRow>& target);

struct KernelBank {
    std::vector<double> bandwidths;  // sigma of exp(-d^2 / (2 sigma^2))
    std::vector<double> weights;     // sum to 1
};

// 5 Gaussians at median pairwise distance x {0.25, 0.5, 1, 2, 4}, uniform
// weights; the median is taken over the pooled rows of X and Y
KernelBank median_heuristic_bank(const FeatureBatch& X, const FeatureBatch& Y);

// unbiased U-statistic estimate of squared MMD; bit-exactly symmetric in
// (X, Y); slightly negative values are possible by construction
double mk_mmd(const FeatureBatch& X, const FeatureBatch& Y, const KernelBank& bank);
double mk_mmd(const FeatureBatch& X, const FeatureBatch& Y);

// d mk_mmd / d Y with the bank treated as a constant. dY has the shape of
// Y.rows.
void mk_mmd_grad_y(const FeatureBatch& X, const FeatureBatch& Y, const KernelBank& bank,
                   std::vector<double>& dY);

struct ProbeConfig {
    int steps = 500;
    double lr = 0.1;
    double train_fraction = 0.7;
    uint64_t seed = 0;
};

// logistic probe on a patient-level split, evaluated as ROC-AUC on held-out
// rows; target is "laterality" or "camera"
double linear_probe_auc(const FeatureBatch& features, const std::string& target,
                        const ProbeConfig& cfg = {});

void write_features_csv(const std::string& path, const FeatureBatch& features);
FeatureBatch read_features_csv(const std::string& path);

}  // namespace clfa::metrics
