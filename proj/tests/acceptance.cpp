// Acceptance gate: ten independently checkable claims about the pipeline, one
// pass/fail line each. Exit code 0 iff every criterion passes. Criteria 7 and
// 8 share one benchmark grid (two pretrains + twelve adaptation runs), so the
// binary takes a while; pass a subset like "1-6,9" as argv[1] to iterate on
// the cheap ones.
//
// Oracles are deliberately independent of the library code paths they check:
// hand-computed closed forms, O(n^2) double loops, frozen-input surrogates,
// and byte-level file comparisons.

#ifndef CLFA_BIN
#error "compile with -DCLFA_BIN=\"/path/to/clfa\" (criterion 10 reruns the CLI)"
#endif

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clfa/adapt/adaptor.hpp"
#include "clfa/adapt/train.hpp"
#include "clfa/cli/commands.hpp"
#include "clfa/core/checkpoint.hpp"
#include "clfa/core/rng.hpp"
#include "clfa/metrics/metrics.hpp"
#include "clfa/model/vit.hpp"
#include "clfa/synth/camera.hpp"
#include "clfa/synth/dataset.hpp"
#include "clfa/synth/generator.hpp"
#include "clfa/train/losses.hpp"
#include "clfa/train/pretrain.hpp"

using namespace clfa;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// pinned tolerances
// ---------------------------------------------------------------------------

// criterion 1: closed-form loss oracles
constexpr double kOracleAbsTol = 1e-6;
// criterion 2: student gradient vs constant-teacher MSE gradient
constexpr double kStopGradRelTol = 1e-6;
// criterion 3: float32 central differences, h = 2e-3. The relative tolerance
// applies above an absolute floor at the float32 FD noise scale: each loss
// evaluation carries O(eps32 * |L|) rounding error, so the difference quotient
// carries O(eps32 * |L| / h) ~ 6e-5 * |L| irreducible noise; 4e-4 * max(1,|L|)
// covers it with margin.
constexpr double kFdRelTol32 = 1e-3;
constexpr double kFdNoiseScale = 4e-4;
constexpr float kFdStep32 = 2e-3f;
// criterion 3, 64-bit clause (double adaptor / backbone paths), h = 1e-6. The
// absolute floor scales with the loss magnitude: central differences carry
// eps64 * |L| / h ~ 2e-10 * |L| rounding noise; 5e-9 * max(1,|L|) covers it.
constexpr double kFdRelTol64 = 1e-5;
constexpr double kFdNoise64 = 5e-9;
constexpr double kFdStep64 = 1e-6;
// criterion 4: estimator vs brute force
constexpr double kMmdBruteTol = 1e-10;
constexpr double kMmdIdenticalTol = 1e-6;
// criterion 6: passthrough prediction agreement
constexpr double kPassthroughTol = 1e-6;
// criterion 7: required improvement of median post over pre consistency
constexpr double kTrendMargin = 0.05;
// criterion 9: probe AUC bounds
constexpr double kProbeSeparatedMin = 0.9;
constexpr double kProbeIdenticalLo = 0.4;
constexpr double kProbeIdenticalHi = 0.6;

// per-criterion wall-clock budgets (seconds); 0 = unbounded
constexpr double kLimit[11] = {0, 1, 10, 120, 10, 120, 60, 1800, 0, 120, 0};

// ---------------------------------------------------------------------------
// benchmark configuration shared by criteria 7 and 8
// ---------------------------------------------------------------------------

struct BenchSpec {
    int n_patients = 640;  // 512 train / 128 val at train_fraction 0.8
    int image_size = 64;
    double train_fraction = 0.8;
    uint64_t data_seed = 1234;
    model::ModelConfig model{64, 8, 32, 2, 4, 4};
    int pre_epochs = 30;
    int pre_batch = 16;
    double pre_lr = 3e-3;
    uint64_t pre_seed = 70;
    int ad_epochs = 30;
    int ad_batch = 32;
    double ad_lr = 1e-2;
    std::array<uint64_t, 3> ad_seeds{1, 2, 3};
};
static const BenchSpec kBench;

// The benchmark uses a deliberately severe target camera (strong channel
// mixing, blur, vignette, gamma and sensor noise): under mild shifts a single
// attention block corrects nearly everything and the structural comparison of
// criterion 8 degenerates into seed noise. The same profile drives the
// separated-profile probe of criterion 9.
static synth::CameraProfile harsh_profile() {
    synth::CameraProfile p;
    p.color_matrix = {0.85f, 0.15f, 0.f, 0.05f, 0.8f, 0.15f, 0.f, 0.1f, 0.85f};
    p.blur_sigma = 1.0f;
    p.vignette_strength = 0.5f;
    p.gamma = 1.5f;
    p.noise_sigma = 0.02f;
    p.seed_offset = 77;
    return p;
}

struct GridResults {
    bool ready = false;
    double pre_clfa = 0, pre_sup = 0;
    std::array<double, 3> post_spm{}, post_sa{}, post_mlp{}, post_sup_spm{};
};
static GridResults g_grid;

// ---------------------------------------------------------------------------
// small helpers
// ---------------------------------------------------------------------------

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

void note(std::string& detail, const std::string& line) { detail += "       " + line + "\n"; }

bool close_abs(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

double median3(const std::array<double, 3>& v) {
    auto s = v;
    std::sort(s.begin(), s.end());
    return s[1];
}

synth::Image random_image(int size, core::Rng& rng) {
    synth::Image img(size, size);
    for (auto& v : img.px) v = float(rng.uniform());
    return img;
}

synth::LabelSet random_labels(core::Rng& rng) {
    synth::LabelSet y;
    y.who_cvd_log = float(rng.uniform(-1, 1));
    y.age = float(rng.uniform(-1, 1));
    y.sbp = float(rng.uniform(-1, 1));
    y.tc = float(rng.uniform(-1, 1));
    y.bmi = float(rng.uniform(-1, 1));
    y.gender = rng.bernoulli(0.5) ? 1 : 0;
    y.smoking = rng.bernoulli(0.5) ? 1 : 0;
    y.diabetes = rng.bernoulli(0.5) ? 1 : 0;
    return y;
}

double gauss_k(const float* a, const float* b, int d, double sigma) {
    double d2 = 0;
    for (int c = 0; c < d; ++c) {
        const double diff = double(a[c]) - double(b[c]);
        d2 += diff * diff;
    }
    return std::exp(-d2 / (2.0 * sigma * sigma));
}

// textbook three-sum unbiased MK-MMD, one kernel at a time
double brute_mmd(const metrics::FeatureBatch& X, const metrics::FeatureBatch& Y,
                 const metrics::KernelBank& bank) {
    double total = 0;
    const double m = double(X.n()), n = double(Y.n());
    for (size_t k = 0; k < bank.bandwidths.size(); ++k) {
        const double s = bank.bandwidths[k];
        double xx = 0, yy = 0, xy = 0;
        for (size_t i = 0; i < X.n(); ++i)
            for (size_t j = 0; j < X.n(); ++j)
                if (i != j) xx += gauss_k(X.row(i), X.row(j), X.d, s);
        for (size_t i = 0; i < Y.n(); ++i)
            for (size_t j = 0; j < Y.n(); ++j)
                if (i != j) yy += gauss_k(Y.row(i), Y.row(j), Y.d, s);
        for (size_t i = 0; i < X.n(); ++i)
            for (size_t j = 0; j < Y.n(); ++j) xy += gauss_k(X.row(i), Y.row(j), X.d, s);
        total += bank.weights[k] * (xx / (m * (m - 1)) + yy / (n * (n - 1)) - 2.0 * xy / (m * n));
    }
    return total;
}

metrics::FeatureBatch random_feature_batch(int n, int d, core::Rng& rng, double shift = 0.0) {
    metrics::FeatureBatch fb;
    fb.d = d;
    std::vector<float> row(size_t(d), 0.f);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < d; ++c) row[size_t(c)] = float(rng.normal() + shift);
        fb.add_row(row.data(), {i, i % 2, 0});
    }
    return fb;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) return {};
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

bool same_bytes(const fs::path& a, const fs::path& b, std::string& detail) {
    const auto ba = slurp(a), bb = slurp(b);
    if (ba.empty() || bb.empty()) {
        note(detail, fmt("missing or empty file: %s vs %s", a.c_str(), b.c_str()));
        return false;
    }
    if (ba != bb) {
        note(detail, fmt("byte mismatch: %s (%zu B) vs %s (%zu B)", a.c_str(), ba.size(),
                         b.c_str(), bb.size()));
        return false;
    }
    return true;
}

int run_cli(const std::string& args, std::string* out = nullptr) {
    // env -u guards against a CLFA_SEED leaking in from the caller
    const std::string cmd = "env -u CLFA_SEED " + std::string(CLFA_BIN) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return -1;
    char buf[4096];
    std::string acc;
    while (size_t n = fread(buf, 1, sizeof buf, p)) acc.append(buf, n);
    const int st = pclose(p);
    if (out) *out = acc;
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

fs::path fresh_dir(const std::string& tag) {
    const auto d = fs::temp_directory_path() / ("clfa_accept_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// batch of synthetic patient records on raw random images (the FD and
// stop-gradient criteria do not need rendered fundus images)
std::vector<synth::PatientRecord> random_records(int n, int image_size, uint64_t seed) {
    core::Rng rng(seed);
    std::vector<synth::PatientRecord> recs(size_t(n), synth::PatientRecord{});
    for (auto& r : recs) {
        r.left = random_image(image_size, rng);
        r.right = random_image(image_size, rng);
        r.labels = random_labels(rng);
    }
    return recs;
}

}  // namespace

// ---------------------------------------------------------------------------
// criterion 1: loss oracles
// ---------------------------------------------------------------------------

static bool crit1(std::string& detail) {
    bool ok = true;
    const double log2v = std::log(2.0);

    // supervised_loss, unit weights: rgs residual 1 on the first task only,
    // three zero logits against targets (1,0,1) -> 1 + 3 log 2
    {
        model::Predictions p;
        p.regression = {1, 0, 0, 0, 0};
        p.class_logits = {0, 0, 0};
        synth::LabelSet y;  // all-zero labels
        y.gender = 1;
        y.diabetes = 1;
        const auto b = train::supervised_loss(p, y, train::TaskWeights{});
        if (!close_abs(b.total, 1.0 + 3.0 * log2v, kOracleAbsTol)) {
            ok = false;
            note(detail, fmt("supervised unit-weight total %.12f != %.12f", b.total,
                             1.0 + 3.0 * log2v));
        }
        if (!close_abs(b.rgs[0], 1.0, kOracleAbsTol) || !close_abs(b.cls[1], log2v, kOracleAbsTol))
            ok = false;
    }

    // supervised_loss, weight2 preset: w_rgs = (4,1,0,0,0), unit class weights
    {
        model::Predictions p;
        p.regression = {0.5f, 1.0f, 7.0f, 7.0f, 7.0f};  // zero-weight tasks may be junk
        p.class_logits = {2.0f, -3.0f, 0.0f};
        synth::LabelSet y;
        y.who_cvd_log = 1.0f;
        y.age = -1.0f;
        y.gender = 1;
        y.smoking = 1;
        const double bce = [](double x, double t) {
            return std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::fabs(x)));
        }(2.0, 1.0);
        const double bce2 = 3.0 + std::log1p(std::exp(-3.0));
        const double want = 4.0 * 0.25 + 1.0 * 4.0 + bce + bce2 + log2v;
        const auto b = train::supervised_loss(p, y, train::TaskWeights::weight2(4.0));
        if (!close_abs(b.total, want, kOracleAbsTol)) {
            ok = false;
            note(detail, fmt("supervised weight2 total %.12f != %.12f", b.total, want));
        }
    }

    // alignment_pair_loss: left has the larger supervised loss -> left is the
    // student; MSE((1,2,3,4),(0,2,3,6)) = (1+0+0+4)/4
    {
        const std::vector<float> zl{1, 2, 3, 4}, zr{0, 2, 3, 6};
        const auto a = train::alignment_pair_loss(zl, zr, 2.0, 1.0);
        if (!a.left_is_student || !close_abs(a.loss, 1.25, kOracleAbsTol)) {
            ok = false;
            note(detail, fmt("alignment loss %.12f (student=%d) != 1.25 (left)", a.loss,
                             int(a.left_is_student)));
        }
        const auto b = train::alignment_pair_loss(zl, zr, 1.0, 2.0);
        if (b.left_is_student) {
            ok = false;
            note(detail, "alignment student selection: right should win on larger sup loss");
        }
    }

    // simsiam with the exact-identity predictor: loss = -cos(zl, zr) = -1/sqrt(2)
    {
        train::SimSiamPredictor<float> h(4, 8, 1);
        h.identity_init();
        const std::vector<float> zl{1, 0, 0, 0}, zr{1, 1, 0, 0};
        const double got = train::simsiam_alignment_loss(zl, zr, h);
        if (!close_abs(got, -1.0 / std::sqrt(2.0), kOracleAbsTol)) {
            ok = false;
            note(detail, fmt("simsiam identity loss %.12f != %.12f", got, -1.0 / std::sqrt(2.0)));
        }
    }

    // adaptation losses on hand batches (D = 3, B = 2)
    {
        std::vector<model::Predictions> ps(2), pt(2);
        ps[0].regression[0] = 1.0f;
        pt[0].regression[0] = 0.0f;
        ps[1].regression[0] = 2.0f;
        pt[1].regression[0] = 2.5f;
        metrics::FeatureBatch zs{3}, za{3};
        const float s0[3] = {1, 0, 2}, s1[3] = {0, 2, 0};
        const float a0[3] = {0.5f, 0.5f, 2}, a1[3] = {1, 1, -1};
        zs.add_row(s0, {0, 0, 0});
        zs.add_row(s1, {1, 0, 0});
        za.add_row(a0, {0, 0, 1});
        za.add_row(a1, {1, 0, 1});

        const double cvd = adapt::adaptation_loss(adapt::AdaptLoss::cvd, ps, pt, zs, za);
        if (!close_abs(cvd, 0.625, kOracleAbsTol)) {
            ok = false;
            note(detail, fmt("cvd loss %.12f != 0.625", cvd));
        }
        // squared diffs 0.25+0.25+0 and 1+1+1 over 6 entries
        const double feat = adapt::adaptation_loss(adapt::AdaptLoss::feature, ps, pt, zs, za);
        if (!close_abs(feat, 3.5 / 6.0, kOracleAbsTol)) {
            ok = false;
            note(detail, fmt("feature loss %.12f != %.12f", feat, 3.5 / 6.0));
        }
        const double both =
            adapt::adaptation_loss(adapt::AdaptLoss::cvd_plus_feature, ps, pt, zs, za);
        if (both != cvd + feat) {
            ok = false;
            note(detail, fmt("cvd_plus_feature %.17g != cvd + feature %.17g", both, cvd + feat));
        }
        const double mk = adapt::adaptation_loss(adapt::AdaptLoss::mkmmd, ps, pt, zs, za);
        const auto bank = metrics::median_heuristic_bank(zs, za);
        if (!close_abs(mk, brute_mmd(zs, za, bank), kOracleAbsTol)) {
            ok = false;
            note(detail, fmt("mkmmd loss %.12f != brute %.12f", mk, brute_mmd(zs, za, bank)));
        }
    }
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 2: stop-gradient semantics of the alignment loss
// ---------------------------------------------------------------------------

static bool crit2(std::string& detail) {
    bool ok = true;
    core::Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const int D = 8;
        std::vector<float> zl(D), zr(D);
        for (auto& v : zl) v = float(rng.normal());
        for (auto& v : zr) v = float(rng.normal());
        const bool left_student = trial % 2 == 0;
        const double scale = rng.uniform(0.1, 2.0);

        std::vector<float> dl(D, 0.f), dr(D, 0.f);
        train::alignment_pair_grad(zl, zr, left_student, scale, dl, dr);

        const auto& teacher_grad = left_student ? dr : dl;
        for (float v : teacher_grad)
            if (v != 0.0f) {
                ok = false;
                note(detail, fmt("trial %d: teacher gradient entry %.9g != 0", trial, v));
            }

        // constant-teacher MSE gradient: d/ds mean_j (s_j - t_j)^2 = 2 (s - t) / D
        const auto& s = left_student ? zl : zr;
        const auto& t = left_student ? zr : zl;
        const auto& student_grad = left_student ? dl : dr;
        for (int j = 0; j < D; ++j) {
            const double want = scale * 2.0 * (double(s[j]) - double(t[j])) / double(D);
            const double got = double(student_grad[size_t(j)]);
            const double tol = kStopGradRelTol * std::max({1e-12, std::fabs(want), std::fabs(got)});
            if (std::fabs(got - want) > tol) {
                ok = false;
                note(detail, fmt("trial %d dim %d: student grad %.9g vs MSE grad %.9g", trial, j,
                                 got, want));
            }
        }
    }
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 3: finite-difference suite on the smallest configuration
// ---------------------------------------------------------------------------

namespace {

// The training gradient of the combined objective implements the Eq. 2
// stop-gradient: per record the teacher feature and the student/teacher
// assignment are constants of differentiation. The scalar that the gradient
// actually differentiates is therefore this frozen-teacher surrogate. At the
// base point it equals total_loss exactly (asserted below); away from it the
// teacher branch stays pinned, like sg(.) requires.
struct FrozenPair {
    bool left_is_student = true;
    std::vector<float> teacher;
};

double frozen_surrogate(const model::ViT<float>& vit,
                        const std::vector<const synth::PatientRecord*>& batch,
                        const train::TaskWeights& w, const std::vector<FrozenPair>& frozen) {
    double acc = 0;
    for (size_t b = 0; b < batch.size(); ++b) {
        const auto& rec = *batch[b];
        const auto tl = vit.extract_features(rec.left);
        const auto tr = vit.extract_features(rec.right);
        acc += train::supervised_loss(vit.predict(tl), rec.labels, w).total;
        acc += train::supervised_loss(vit.predict(tr), rec.labels, w).total;
        const auto& zs = frozen[b].left_is_student ? tl.cls : tr.cls;
        double mse = 0;
        for (size_t j = 0; j < zs.size(); ++j) {
            const double d = double(zs[j]) - double(frozen[b].teacher[j]);
            mse += d * d;
        }
        acc += w.lambda * mse / double(zs.size());
    }
    return acc / double(batch.size());
}

bool fd_sweep_float(const std::function<double()>& f, std::vector<float>& data,
                    const std::vector<float>& grad, double noise_floor, const char* what,
                    std::string& detail) {
    bool ok = true;
    double worst = 0;
    size_t worst_i = 0;
    double worst_fd = 0, worst_g = 0;
    for (size_t i = 0; i < data.size(); ++i) {
        const float keep = data[i];
        data[i] = keep + kFdStep32;
        const double lp = f();
        data[i] = keep - kFdStep32;
        const double lm = f();
        data[i] = keep;
        const double fd = (lp - lm) / (2.0 * double(kFdStep32));
        const double g = double(grad[i]);
        const double tol = kFdRelTol32 * std::max(std::fabs(fd), std::fabs(g)) + noise_floor;
        const double err = std::fabs(fd - g);
        if (err > tol) {
            ok = false;
            if (err - tol > worst) {
                worst = err - tol;
                worst_i = i;
                worst_fd = fd;
                worst_g = g;
            }
        }
    }
    if (!ok)
        note(detail, fmt("%s: worst param %zu fd %.8f vs grad %.8f (floor %.2g)", what, worst_i,
                         worst_fd, worst_g, noise_floor));
    return ok;
}

// whole-gradient check: central difference along the normalized analytic
// gradient direction must equal its norm
bool fd_directional(const std::function<double()>& f, std::vector<float>& data,
                    const std::vector<float>& grad, const char* what, std::string& detail) {
    double gnorm = 0;
    for (float v : grad) gnorm += double(v) * double(v);
    gnorm = std::sqrt(gnorm);
    if (gnorm == 0) {
        note(detail, fmt("%s: zero analytic gradient", what));
        return false;
    }
    const std::vector<float> w0 = data;
    const double h = double(kFdStep32);
    for (size_t i = 0; i < data.size(); ++i)
        data[i] = w0[i] + float(h * double(grad[i]) / gnorm);
    const double lp = f();
    for (size_t i = 0; i < data.size(); ++i)
        data[i] = w0[i] - float(h * double(grad[i]) / gnorm);
    const double lm = f();
    data = w0;
    const double fd = (lp - lm) / (2.0 * h);
    if (std::fabs(fd - gnorm) > kFdRelTol32 * std::max(std::fabs(fd), gnorm)) {
        note(detail, fmt("%s: directional derivative %.9f vs |grad| %.9f", what, fd, gnorm));
        return false;
    }
    return true;
}

}  // namespace

static bool crit3(std::string& detail) {
    bool ok = true;
    const model::ModelConfig mc{16, 8, 16, 1, 2, 2};  // smallest config: depth 1, D = 16, 16x16

    // --- total_loss, clfa variant (Eq. 3), float32 ---
    {
        model::ViT<float> vit(mc, 42);
        const auto recs = random_records(2, mc.image_size, 7);
        const std::vector<const synth::PatientRecord*> batch{&recs[0], &recs[1]};
        const train::TaskWeights w;

        std::vector<FrozenPair> frozen;
        for (const auto* rp : batch) {
            const auto tl = vit.extract_features(rp->left);
            const auto tr = vit.extract_features(rp->right);
            const double supl = train::supervised_loss(vit.predict(tl), rp->labels, w).total;
            const double supr = train::supervised_loss(vit.predict(tr), rp->labels, w).total;
            const auto a = train::alignment_pair_loss(tl.cls, tr.cls, supl, supr);
            frozen.push_back({a.left_is_student, a.left_is_student ? tr.cls : tl.cls});
        }

        vit.params.zero_grad();
        const auto bd =
            train::total_loss_backward(vit, batch, w, train::BranchVariant::clfa);
        const double E0 = frozen_surrogate(vit, batch, w, frozen);
        if (std::fabs(bd.total - E0) > 1e-12 * std::max(1.0, std::fabs(bd.total))) {
            ok = false;
            note(detail, fmt("surrogate value %.17g != total_loss %.17g", E0, bd.total));
        }
        const double floor = kFdNoiseScale * std::max(1.0, std::fabs(bd.total));
        auto f = [&]() { return frozen_surrogate(vit, batch, w, frozen); };
        ok &= fd_sweep_float(f, vit.params.data, vit.params.grad, floor, "total_loss clfa",
                             detail);
        ok &= fd_directional(f, vit.params.data, vit.params.grad, "total_loss clfa dir", detail);
    }

    // --- total_loss, supervised_only (no stop-gradient involved) ---
    {
        model::ViT<float> vit(mc, 43);
        const auto recs = random_records(2, mc.image_size, 8);
        const std::vector<const synth::PatientRecord*> batch{&recs[0], &recs[1]};
        const train::TaskWeights w;
        vit.params.zero_grad();
        const auto bd =
            train::total_loss_backward(vit, batch, w, train::BranchVariant::supervised_only);
        const double floor = kFdNoiseScale * std::max(1.0, std::fabs(bd.total));
        auto f = [&]() {
            return train::total_loss(vit, batch, w, train::BranchVariant::supervised_only).total;
        };
        ok &= fd_sweep_float(f, vit.params.data, vit.params.grad, floor, "total_loss supervised",
                             detail);
    }

    // --- each adaptation loss w.r.t. every adaptor parameter, float32 ---
    {
        model::ViT<float> backbone(mc, 3);
        core::Rng rng(55);
        const size_t B = 4;
        std::vector<model::TokenSet> toks(B);
        std::vector<const model::TokenSet*> tokp(B);
        std::vector<model::Predictions> ps(B);
        metrics::FeatureBatch zs{mc.embed_dim};
        for (size_t k = 0; k < B; ++k) {
            toks[k] = backbone.extract_features(random_image(mc.image_size, rng));
            tokp[k] = &toks[k];
            const auto tok_s = backbone.extract_features(random_image(mc.image_size, rng));
            ps[k] = backbone.predict(tok_s);
            zs.add_row(tok_s.cls.data(), {(long long)k, 0, 0});
        }

        for (auto loss : {adapt::AdaptLoss::cvd, adapt::AdaptLoss::feature,
                          adapt::AdaptLoss::mkmmd, adapt::AdaptLoss::cvd_plus_feature}) {
            adapt::Adaptor<float> a(adapt::AdaptorVariant::sa_plus_mlp, mc.embed_dim, mc.heads,
                                    mc.mlp_ratio, 5, /*passthrough_init=*/false);
            // the analytic mkmmd gradient treats the kernel bank as constant,
            // so the FD target freezes it at the base point
            metrics::KernelBank bank;
            {
                metrics::FeatureBatch za0{mc.embed_dim};
                for (size_t k = 0; k < B; ++k) {
                    const auto za = a.adapt(toks[k]);
                    za0.add_row(za.data(), {(long long)k, 0, 1});
                }
                bank = metrics::median_heuristic_bank(zs, za0);
            }
            // evaluates the loss and records the sign pattern of the projector
            // ReLU pre-activations; a central difference whose two endpoints
            // disagree on any sign straddles a kink and is not a valid
            // derivative estimate, so those coordinates are skipped
            auto f = [&](std::vector<char>* signs) {
                metrics::FeatureBatch za_b{mc.embed_dim};
                std::vector<model::Predictions> pt(B);
                for (size_t k = 0; k < B; ++k) {
                    typename adapt::Adaptor<float>::Trace tr;
                    a.forward_trace(toks[k], tr);
                    if (signs)
                        for (float u : tr.p_u) signs->push_back(u > 0.f ? 1 : 0);
                    za_b.add_row(tr.za.data(), {(long long)k, 0, 1});
                    pt[k] = backbone.predict_cls(tr.za.data());
                }
                if (loss == adapt::AdaptLoss::mkmmd) return metrics::mk_mmd(zs, za_b, bank);
                return adapt::adaptation_loss(loss, ps, pt, zs, za_b);
            };
            a.params.zero_grad();
            const double l0 = adapt::adaptation_batch_grad(backbone, a, tokp, ps, zs, loss);
            if (std::fabs(l0 - f(nullptr)) > 1e-9 * std::max(1.0, std::fabs(l0))) {
                ok = false;
                note(detail, fmt("adaptation loss %s: grad-path value %.12g != eval %.12g",
                                 to_string(loss).c_str(), l0, f(nullptr)));
            }
            const double floor = kFdNoiseScale * std::max(1.0, std::fabs(l0));
            size_t skipped = 0;
            for (size_t i = 0; i < a.params.total; ++i) {
                const float keep = a.params.data[i];
                std::vector<char> sp, sm;
                a.params.data[i] = keep + kFdStep32;
                const double lp = f(&sp);
                a.params.data[i] = keep - kFdStep32;
                const double lm = f(&sm);
                a.params.data[i] = keep;
                if (sp != sm) {
                    ++skipped;
                    continue;
                }
                const double fd = (lp - lm) / (2.0 * double(kFdStep32));
                const double g = double(a.params.grad[i]);
                if (std::fabs(fd - g) >
                    kFdRelTol32 * std::max(std::fabs(fd), std::fabs(g)) + floor) {
                    ok = false;
                    note(detail, fmt("adaptation %s param %zu: fd %.8f vs grad %.8f",
                                     adapt::to_string(loss).c_str(), i, fd, g));
                    break;
                }
            }
            if (skipped > a.params.total / 20) {
                ok = false;
                note(detail, fmt("adaptation %s: %zu of %zu coordinates straddle ReLU kinks",
                                 adapt::to_string(loss).c_str(), skipped, a.params.total));
            }
        }
    }

    // --- 64-bit clause: the double-precision paths at 1e-5 relative ---
    // adaptor backward, all variants, scalar c . adapt(tokens)
    {
        core::Rng rng(42);
        model::TokenSetT<double> tokens;
        tokens.d = 16;
        tokens.n = 4;
        tokens.cls.resize(16);
        tokens.patches.resize(4 * 16);
        for (auto& v : tokens.cls) v = rng.normal();
        for (auto& v : tokens.patches) v = rng.normal();
        std::vector<double> c(16);
        for (auto& v : c) v = rng.normal();

        for (auto variant : {adapt::AdaptorVariant::sa_plus_mlp, adapt::AdaptorVariant::sa_only,
                             adapt::AdaptorVariant::mlp_only}) {
            adapt::Adaptor<double> a(variant, 16, 2, 2, 5, /*passthrough_init=*/false);
            auto f = [&]() {
                const auto za = a.adapt(tokens);
                double L = 0;
                for (size_t j = 0; j < za.size(); ++j) L += c[j] * za[j];
                return L;
            };
            a.params.zero_grad();
            typename adapt::Adaptor<double>::Trace tr;
            a.forward_trace(tokens, tr);
            a.backward(tr, c.data());
            const double floor64 = kFdNoise64 * std::max(1.0, std::fabs(f()));
            for (size_t i = 0; i < a.params.total; ++i) {
                const double keep = a.params.data[i];
                a.params.data[i] = keep + kFdStep64;
                const double lp = f();
                a.params.data[i] = keep - kFdStep64;
                const double lm = f();
                a.params.data[i] = keep;
                const double fd = (lp - lm) / (2.0 * kFdStep64);
                const double g = a.params.grad[i];
                if (std::fabs(fd - g) >
                    kFdRelTol64 * std::max(std::fabs(fd), std::fabs(g)) + floor64) {
                    ok = false;
                    note(detail, fmt("double adaptor %s param %zu: fd %.12g vs grad %.12g",
                                     adapt::to_string(variant).c_str(), i, fd, g));
                    break;
                }
            }
        }
    }
    // backbone backward in double: scalar a . regression + b . logits
    {
        model::ViT<double> vit(mc, 41);
        core::Rng rng(9);
        std::vector<double> px(size_t(3) * mc.image_size * mc.image_size);
        for (auto& v : px) v = rng.uniform();
        std::array<double, 5> da;
        std::array<double, 3> db;
        for (auto& v : da) v = rng.normal();
        for (auto& v : db) v = rng.normal();
        auto f = [&]() {
            const auto p = vit.forward(px.data());
            double acc = 0;
            for (int k = 0; k < 5; ++k) acc += da[size_t(k)] * p.regression[size_t(k)];
            for (int k = 0; k < 3; ++k) acc += db[size_t(k)] * p.class_logits[size_t(k)];
            return acc;
        };
        model::ViT<double>::Trace tr;
        vit.forward_trace(px.data(), tr);
        vit.params.zero_grad();
        vit.backward(tr, da.data(), db.data(), nullptr);
        const double floor64 = kFdNoise64 * std::max(1.0, std::fabs(f()));
        for (size_t i = 0; i < vit.params.total; ++i) {
            const double keep = vit.params.data[i];
            vit.params.data[i] = keep + kFdStep64;
            const double lp = f();
            vit.params.data[i] = keep - kFdStep64;
            const double lm = f();
            vit.params.data[i] = keep;
            const double fd = (lp - lm) / (2.0 * kFdStep64);
            const double g = vit.params.grad[i];
            if (std::fabs(fd - g) >
                kFdRelTol64 * std::max(std::fabs(fd), std::fabs(g)) + floor64) {
                ok = false;
                note(detail, fmt("double backbone param %zu: fd %.12g vs grad %.12g", i, fd, g));
                break;
            }
        }
    }
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 4: MK-MMD estimator vs brute force
// ---------------------------------------------------------------------------

static bool crit4(std::string& detail) {
    bool ok = true;
    core::Rng rng(911);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 1 + int(rng.uniform_index(8));
        const int m = 2 + int(rng.uniform_index(29));
        const int n = 2 + int(rng.uniform_index(29));
        auto X = random_feature_batch(m, d, rng);
        auto Y = random_feature_batch(n, d, rng, 0.5);
        const auto bank = metrics::median_heuristic_bank(X, Y);
        const double fast = metrics::mk_mmd(X, Y, bank);
        const double slow = brute_mmd(X, Y, bank);
        if (std::fabs(fast - slow) > kMmdBruteTol) {
            ok = false;
            note(detail, fmt("trial %d (m=%d n=%d d=%d): |%.15g - %.15g| > 1e-10", trial, m, n, d,
                             fast, slow));
        }
        const double sym = metrics::mk_mmd(Y, X, bank);
        if (fast != sym) {
            ok = false;
            note(detail, fmt("trial %d: symmetry not bit-exact (%a vs %a)", trial, fast, sym));
        }
    }
    // identical sets vs direct computation
    for (int trial = 0; trial < 4; ++trial) {
        const int m = 4 + int(rng.uniform_index(20));
        auto X = random_feature_batch(m, 5, rng);
        const auto bank = metrics::median_heuristic_bank(X, X);
        const double fast = metrics::mk_mmd(X, X, bank);
        const double direct = brute_mmd(X, X, bank);
        if (std::fabs(fast - direct) > kMmdIdenticalTol) {
            ok = false;
            note(detail, fmt("identical-set trial %d: %.12g vs direct %.12g", trial, fast, direct));
        }
    }
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 5: freeze invariant under train_adaptor
// ---------------------------------------------------------------------------

static bool crit5(std::string& detail) {
    const model::ModelConfig mc{32, 8, 32, 1, 2, 2};
    model::ViT<float> backbone(mc, 19);
    const auto bundle = synth::make_paired_dataset(16, synth::CameraProfile{},
                                                   cli::default_target_profile(), 99,
                                                   synth::GeneratorConfig{32}, 0.8);
    if (bundle.pairs.size() < 32) {
        note(detail, fmt("expected >= 32 pairs, got %zu", bundle.pairs.size()));
        return false;
    }

    const auto bytes_before = backbone.to_checkpoint("backbone").to_bytes();
    const uint64_t sum_before = core::fnv1a64(bytes_before.data(), bytes_before.size());
    std::vector<model::Predictions> preds_before;
    for (int i = 0; i < 16; ++i) preds_before.push_back(backbone.forward(bundle.records[i].left));

    adapt::AdaptConfig cfg;
    cfg.variant = adapt::AdaptorVariant::sa_plus_mlp;
    cfg.loss = adapt::AdaptLoss::cvd;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-2;
    cfg.seed = 5;
    const auto res = adapt::train_adaptor(bundle.pairs, backbone, cfg);

    bool ok = true;
    const auto bytes_after = backbone.to_checkpoint("backbone").to_bytes();
    const uint64_t sum_after = core::fnv1a64(bytes_after.data(), bytes_after.size());
    if (sum_before != sum_after || bytes_before != bytes_after) {
        ok = false;
        note(detail, fmt("backbone checkpoint checksum changed: %016llx -> %016llx",
                         (unsigned long long)sum_before, (unsigned long long)sum_after));
    }
    for (int i = 0; i < 16; ++i) {
        const auto p = backbone.forward(bundle.records[size_t(i)].left);
        if (std::memcmp(&p, &preds_before[size_t(i)], sizeof p) != 0) {
            ok = false;
            note(detail, fmt("source predictions on fixed image %d changed bitwise", i));
        }
    }
    // the run must have actually trained something
    bool moved = false;
    for (const auto& r : res.history)
        if (r.split == "train" && r.task == "loss_total" && r.value > 0) moved = true;
    if (!moved) {
        ok = false;
        note(detail, "adaptor training loop produced no loss records");
    }
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 6: passthrough equivalence
// ---------------------------------------------------------------------------

static bool crit6(std::string& detail) {
    bool ok = true;
    const model::ModelConfig mc{32, 8, 32, 1, 4, 4};
    model::ViT<float> backbone(mc, 4);
    core::Rng rng(12);

    for (auto variant : {adapt::AdaptorVariant::sa_plus_mlp, adapt::AdaptorVariant::sa_only,
                         adapt::AdaptorVariant::mlp_only}) {
        adapt::Adaptor<float> a(variant, mc.embed_dim, mc.heads, mc.mlp_ratio, 5);
        for (int i = 0; i < 16; ++i) {
            const auto img = random_image(mc.image_size, rng);
            const auto via_adaptor = adapt::predict_target(backbone, a, img);
            const auto direct = backbone.forward(img);
            for (int k = 0; k < 5; ++k)
                if (std::fabs(double(via_adaptor.regression[size_t(k)]) -
                              double(direct.regression[size_t(k)])) > kPassthroughTol)
                    ok = false;
            for (int k = 0; k < 3; ++k)
                if (std::fabs(double(via_adaptor.class_logits[size_t(k)]) -
                              double(direct.class_logits[size_t(k)])) > kPassthroughTol)
                    ok = false;
        }
        if (!ok) {
            note(detail, fmt("predict_target != forward for passthrough %s",
                             adapt::to_string(variant).c_str()));
            break;
        }
    }

    // identical camera profiles -> byte-identical pairs -> consistency exactly 1
    const auto bundle =
        synth::make_paired_dataset(8, synth::CameraProfile{}, synth::CameraProfile{}, 31,
                                   synth::GeneratorConfig{32}, 1.0);
    adapt::Adaptor<float> a(adapt::AdaptorVariant::sa_plus_mlp, mc.embed_dim, mc.heads,
                            mc.mlp_ratio, 5);
    std::vector<metrics::PredRow> rs, rt;
    for (const auto& pr : bundle.pairs) {
        const auto p_src = backbone.forward(pr.source_image);
        const auto p_tgt = adapt::predict_target(backbone, a, pr.target_image);
        rs.push_back({pr.patient_id, pr.laterality, double(p_src.regression[0])});
        rt.push_back({pr.patient_id, pr.laterality, double(p_tgt.regression[0])});
    }
    const double c = metrics::consistency_r2(rs, rt);
    if (c != 1.0) {
        ok = false;
        note(detail, fmt("identical-profile consistency R^2 %.17g != 1.0", c));
    }
    return ok;
}

// ---------------------------------------------------------------------------
// criteria 7 + 8: the benchmark grid
// ---------------------------------------------------------------------------

namespace {

double last_val_consistency(const std::vector<train::MetricRecord>& hist) {
    double v = 0;
    for (const auto& r : hist)
        if (r.split == "val" && r.task == "consistency_r2") v = r.value;
    return v;
}

double pre_val_consistency(const std::vector<train::MetricRecord>& hist) {
    for (const auto& r : hist)
        if (r.epoch == 0 && r.split == "val" && r.task == "consistency_r2") return r.value;
    return 0;
}

void run_grid(std::string& detail) {
    const auto& B = kBench;
    const auto bundle = synth::make_paired_dataset(
        B.n_patients, synth::CameraProfile{}, harsh_profile(), B.data_seed,
        synth::GeneratorConfig{B.image_size}, B.train_fraction);

    std::vector<synth::PairedSample> train_pairs, val_pairs;
    for (const auto& pr : bundle.pairs)
        (bundle.split[size_t(pr.patient_id)] == 0 ? train_pairs : val_pairs).push_back(pr);
    note(detail, fmt("benchmark: %zu train / %zu val pairs", train_pairs.size(),
                     val_pairs.size()));

    auto pretrain_backbone = [&](train::BranchVariant variant) {
        train::PretrainConfig pc;
        pc.model = B.model;
        pc.batch_size = B.pre_batch;
        pc.learning_rate = B.pre_lr;
        pc.epochs = B.pre_epochs;
        pc.seed = B.pre_seed;
        pc.variant = variant;
        const auto res = train::pretrain(bundle, pc);
        return model::ViT<float>::from_checkpoint(res.checkpoint);
    };

    auto adapt_cell = [&](const model::ViT<float>& backbone, adapt::AdaptorVariant variant,
                          uint64_t seed, double& pre_out) {
        adapt::AdaptConfig ac;
        ac.variant = variant;
        ac.loss = adapt::AdaptLoss::cvd;
        ac.batch_size = B.ad_batch;
        ac.learning_rate = B.ad_lr;
        ac.epochs = B.ad_epochs;
        ac.seed = seed;
        const auto res = adapt::train_adaptor(train_pairs, backbone, ac, val_pairs);
        pre_out = pre_val_consistency(res.history);
        return last_val_consistency(res.history);
    };

    const auto bb_clfa = pretrain_backbone(train::BranchVariant::clfa);
    const auto bb_sup = pretrain_backbone(train::BranchVariant::supervised_only);

    for (size_t i = 0; i < 3; ++i) {
        g_grid.post_spm[i] = adapt_cell(bb_clfa, adapt::AdaptorVariant::sa_plus_mlp,
                                        B.ad_seeds[i], g_grid.pre_clfa);
        g_grid.post_sa[i] =
            adapt_cell(bb_clfa, adapt::AdaptorVariant::sa_only, B.ad_seeds[i], g_grid.pre_clfa);
        g_grid.post_mlp[i] =
            adapt_cell(bb_clfa, adapt::AdaptorVariant::mlp_only, B.ad_seeds[i], g_grid.pre_clfa);
        g_grid.post_sup_spm[i] = adapt_cell(bb_sup, adapt::AdaptorVariant::sa_plus_mlp,
                                            B.ad_seeds[i], g_grid.pre_sup);
    }
    g_grid.ready = true;

    note(detail, fmt("clfa pre %.4f | sa_plus_mlp {%.4f %.4f %.4f} | sa_only {%.4f %.4f %.4f} | "
                     "mlp_only {%.4f %.4f %.4f}",
                     g_grid.pre_clfa, g_grid.post_spm[0], g_grid.post_spm[1], g_grid.post_spm[2],
                     g_grid.post_sa[0], g_grid.post_sa[1], g_grid.post_sa[2], g_grid.post_mlp[0],
                     g_grid.post_mlp[1], g_grid.post_mlp[2]));
    note(detail, fmt("supervised pre %.4f | sa_plus_mlp {%.4f %.4f %.4f}", g_grid.pre_sup,
                     g_grid.post_sup_spm[0], g_grid.post_sup_spm[1], g_grid.post_sup_spm[2]));
}

}  // namespace

static bool crit7(std::string& detail) {
    run_grid(detail);
    bool ok = true;
    const double med_spm = median3(g_grid.post_spm);
    const double med_sup = median3(g_grid.post_sup_spm);
    if (!(med_spm >= g_grid.pre_clfa + kTrendMargin)) {
        ok = false;
        note(detail, fmt("(a) median post %.4f < pre %.4f + %.2f", med_spm, g_grid.pre_clfa,
                         kTrendMargin));
    }
    if (!(med_spm >= med_sup)) {
        ok = false;
        note(detail, fmt("(b) clfa median post %.4f < supervised-only median post %.4f", med_spm,
                         med_sup));
    }
    note(detail, fmt("medians: clfa sa_plus_mlp %.4f (pre %.4f), supervised sa_plus_mlp %.4f",
                     med_spm, g_grid.pre_clfa, med_sup));
    return ok;
}

static bool crit8(std::string& detail) {
    if (!g_grid.ready) {
        note(detail, "criterion 7 grid unavailable");
        return false;
    }
    const double med_spm = median3(g_grid.post_spm);
    const double med_sa = median3(g_grid.post_sa);
    const double med_mlp = median3(g_grid.post_mlp);
    note(detail, fmt("medians: sa_plus_mlp %.4f, sa_only %.4f, mlp_only %.4f", med_spm, med_sa,
                     med_mlp));
    bool ok = true;
    if (!(med_spm > med_sa)) {
        ok = false;
        note(detail, fmt("sa_plus_mlp %.4f not above sa_only %.4f", med_spm, med_sa));
    }
    if (!(med_spm > med_mlp)) {
        ok = false;
        note(detail, fmt("sa_plus_mlp %.4f not above mlp_only %.4f", med_spm, med_mlp));
    }
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 9: probe sanity
// ---------------------------------------------------------------------------

static bool crit9(std::string& detail) {
    bool ok = true;
    const auto separated = synth::make_paired_dataset(64, synth::CameraProfile{}, harsh_profile(),
                                                      9, synth::GeneratorConfig{32}, 0.8);

    train::PretrainConfig pc;
    pc.model = {32, 8, 32, 1, 4, 4};
    pc.batch_size = 16;
    pc.epochs = 1;
    pc.seed = 3;
    const auto backbone =
        model::ViT<float>::from_checkpoint(train::pretrain(separated, pc).checkpoint);

    auto features_of = [&](const synth::DatasetBundle& bundle) {
        metrics::FeatureBatch fb{pc.model.embed_dim};
        for (const auto& pr : bundle.pairs) {
            const auto zs = backbone.extract_features(pr.source_image);
            fb.add_row(zs.cls.data(), {pr.patient_id, pr.laterality, 0});
            const auto zt = backbone.extract_features(pr.target_image);
            fb.add_row(zt.cls.data(), {pr.patient_id, pr.laterality, 1});
        }
        return fb;
    };

    const double auc_sep = metrics::linear_probe_auc(features_of(separated), "camera", {});
    if (!(auc_sep >= kProbeSeparatedMin)) {
        ok = false;
        note(detail, fmt("separated-profile AUC_camera %.4f < %.2f", auc_sep, kProbeSeparatedMin));
    }

    const auto identical = synth::make_paired_dataset(64, synth::CameraProfile{},
                                                      synth::CameraProfile{}, 9,
                                                      synth::GeneratorConfig{32}, 0.8);
    const double auc_id = metrics::linear_probe_auc(features_of(identical), "camera", {});
    if (!(auc_id >= kProbeIdenticalLo && auc_id <= kProbeIdenticalHi)) {
        ok = false;
        note(detail, fmt("identical-profile AUC_camera %.4f outside [%.1f, %.1f]", auc_id,
                         kProbeIdenticalLo, kProbeIdenticalHi));
    }
    note(detail, fmt("AUC_camera separated %.4f, identical %.4f", auc_sep, auc_id));
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 10: byte-for-byte reruns of every CLI command
// ---------------------------------------------------------------------------

static bool crit10(std::string& detail) {
    bool ok = true;
    const auto w = fresh_dir("c10");
    const auto ds1 = w / "ds1", ds2 = w / "ds2";

    auto must_run = [&](const std::string& args) {
        std::string out;
        const int rc = run_cli(args, &out);
        if (rc != 0) {
            ok = false;
            note(detail, fmt("command failed (rc %d): %s", rc, args.c_str()));
            note(detail, out.substr(0, 300));
        }
        return rc == 0;
    };

    // gen-data twice
    const std::string gen_flags = " --n-patients 8 --image-size 32 --seed 11";
    must_run("gen-data --out " + ds1.string() + gen_flags);
    must_run("gen-data --out " + ds2.string() + gen_flags);
    ok &= same_bytes(ds1 / "labels.csv", ds2 / "labels.csv", detail);
    ok &= same_bytes(ds1 / "manifest.json", ds2 / "manifest.json", detail);
    ok &= same_bytes(ds1 / "images" / "0003_right_target.png",
                     ds2 / "images" / "0003_right_target.png", detail);

    // pretrain twice (config file carries the tiny model, flags the rest)
    {
        nlohmann::json mc = {{"image_size", 32}, {"patch_size", 8}, {"embed_dim", 16},
                             {"depth", 1},       {"heads", 2},      {"mlp_ratio", 2}};
        nlohmann::json cfg = {{"model", mc}};
        std::ofstream(w / "pre.json") << cfg.dump(2) << "\n";
    }
    const std::string pre_flags = " --config " + (w / "pre.json").string() + " --data " +
                                  ds1.string() + " --epochs 1 --batch-size 4 --lr 1e-3 --seed 7";
    must_run("pretrain --out " + (w / "bb1.ckpt").string() + pre_flags);
    must_run("pretrain --out " + (w / "bb2.ckpt").string() + pre_flags);
    ok &= same_bytes(w / "bb1.ckpt", w / "bb2.ckpt", detail);
    ok &= same_bytes(w / "bb1.ckpt.history.jsonl", w / "bb2.ckpt.history.jsonl", detail);

    // adapt twice
    const std::string ad_flags = " --data " + ds1.string() + " --backbone " +
                                 (w / "bb1.ckpt").string() +
                                 " --variant sa_plus_mlp --loss cvd --epochs 1 --batch-size 8 "
                                 "--lr 1e-2 --seed 1";
    must_run("adapt --out " + (w / "ad1.ckpt").string() + ad_flags);
    must_run("adapt --out " + (w / "ad2.ckpt").string() + ad_flags);
    ok &= same_bytes(w / "ad1.ckpt", w / "ad2.ckpt", detail);
    ok &= same_bytes(w / "ad1.ckpt.history.jsonl", w / "ad2.ckpt.history.jsonl", detail);

    // eval twice
    const std::string ev_flags = " --data " + ds1.string() + " --backbone " +
                                 (w / "bb1.ckpt").string() + " --adaptor " +
                                 (w / "ad1.ckpt").string() + " --split val";
    must_run("eval --report " + (w / "rep1.json").string() + ev_flags);
    must_run("eval --report " + (w / "rep2.json").string() + ev_flags);
    ok &= same_bytes(w / "rep1.json", w / "rep2.json", detail);

    // export-features twice
    const std::string ex_flags = " --data " + ds1.string() + " --backbone " +
                                 (w / "bb1.ckpt").string() + " --adaptor " +
                                 (w / "ad1.ckpt").string() + " --split all";
    must_run("export-features --out " + (w / "f1.csv").string() + ex_flags);
    must_run("export-features --out " + (w / "f2.csv").string() + ex_flags);
    ok &= same_bytes(w / "f1.csv", w / "f2.csv", detail);

    // probe twice
    const std::string pr_flags =
        " --features " + (w / "f1.csv").string() + " --steps 200 --seed 2";
    must_run("probe --report " + (w / "pr1.json").string() + pr_flags);
    must_run("probe --report " + (w / "pr2.json").string() + pr_flags);
    ok &= same_bytes(w / "pr1.json", w / "pr2.json", detail);

    fs::remove_all(w);
    return ok;
}

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    unsetenv("CLFA_SEED");

    std::set<int> selected;
    if (argc > 1) {
        const std::string spec = argv[1];
        size_t pos = 0;
        while (pos < spec.size()) {
            size_t comma = spec.find(',', pos);
            if (comma == std::string::npos) comma = spec.size();
            const std::string tok = spec.substr(pos, comma - pos);
            const size_t dash = tok.find('-');
            if (dash == std::string::npos) {
                selected.insert(std::atoi(tok.c_str()));
            } else {
                const int lo = std::atoi(tok.substr(0, dash).c_str());
                const int hi = std::atoi(tok.substr(dash + 1).c_str());
                for (int i = lo; i <= hi; ++i) selected.insert(i);
            }
            pos = comma + 1;
        }
    } else {
        for (int i = 1; i <= 10; ++i) selected.insert(i);
    }

    struct Entry {
        int id;
        const char* name;
        bool (*fn)(std::string&);
    };
    const Entry entries[] = {
        {1, "loss oracles (supervised, alignment, simsiam, adaptation)", crit1},
        {2, "stop-gradient semantics of the alignment loss", crit2},
        {3, "finite-difference gradient suite (float32 + double)", crit3},
        {4, "MK-MMD estimator vs brute force, symmetry, identical sets", crit4},
        {5, "freeze invariant under adaptor training", crit5},
        {6, "passthrough equivalence and identical-profile consistency", crit6},
        {7, "benchmark trend: post vs pre and CLFA vs supervised-only", crit7},
        {8, "benchmark structure: sa_plus_mlp best of three variants", crit8},
        {9, "probe sanity: separated vs identical camera profiles", crit9},
        {10, "byte-for-byte reruns of every CLI command", crit10},
    };

    int failures = 0;
    for (const auto& e : entries) {
        if (!selected.count(e.id)) continue;
        std::string detail;
        bool ok = false;
        const double t0 = now_s();
        try {
            ok = e.fn(detail);
        } catch (const std::exception& ex) {
            ok = false;
            note(detail, std::string("exception: ") + ex.what());
        }
        const double el = now_s() - t0;
        if (ok && kLimit[e.id] > 0 && el >= kLimit[e.id]) {
            ok = false;
            note(detail, fmt("runtime %.1f s exceeds the %.0f s budget", el, kLimit[e.id]));
        }
        printf("[%s] %2d. %s (%.1f s)\n", ok ? "PASS" : "FAIL", e.id, e.name, el);
        if (!detail.empty() && (!ok || e.id == 7 || e.id == 8 || e.id == 9)) fputs(detail.c_str(), stdout);
        fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures == 0)
        printf("acceptance: all %zu selected criteria passed\n", selected.size());
    else
        printf("acceptance: %d criterion(s) FAILED\n", failures);
    return failures == 0 ? 0 : 1;
}
