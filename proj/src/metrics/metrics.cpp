#include <clfa/metrics/metrics.hpp>

#include <clfa/core/errors.hpp>
#include <clfa/core/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace clfa::metrics {

void FeatureBatch::add_row(const float* v, FeatureMeta m) {
    rows.insert(rows.end(), v, v + d);
    meta.push_back(m);
}

double r2(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
    if (y_true.size() != y_pred.size())
        throw ArgumentError("r2: y_true and y_pred sizes differ");
    const size_t n = y_true.size();
    if (n < 2) throw ArgumentError("r2: need at least 2 observations");
    double mean = 0;
    for (double v : y_true) mean += v;
    mean /= double(n);
    double ss_tot = 0, ss_res = 0;
    for (size_t i = 0; i < n; ++i) {
        ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
        ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    }
    if (ss_tot == 0.0) throw NumericError("r2: y_true is constant, denominator undefined");
    return 1.0 - ss_res / ss_tot;
}

double consistency_r2(const std::vector<PredRow>& source, const std::vector<PredRow>& target) {
    if (source.size() != target.size())
        throw ArgumentError("consistency_r2: prediction lists have different lengths");
    std::vector<double> yt(source.size()), yp(source.size());
    for (size_t i = 0; i < source.size(); ++i) {
        if (source[i].patient_id != target[i].patient_id ||
            source[i].laterality != target[i].laterality)
            throw ArgumentError("consistency_r2: rows are not aligned by (patient, laterality)");
        yt[i] = source[i].value;
        yp[i] = target[i].value;
    }
    return r2(yt, yp);
}

namespace {

double sq_dist(const float* a, const float* b, int d) {
    double s = 0;
    for (int k = 0; k < d; ++k) {
        double diff = double(a[k]) - double(b[k]);
        s += diff * diff;
    }
    return s;
}

double mix_kernel(double d2, const KernelBank& bank) {
    double k = 0;
    for (size_t m = 0; m < bank.bandwidths.size(); ++m) {
        double s2 = bank.bandwidths[m] * bank.bandwidths[m];
        k += bank.weights[m] * std::exp(-d2 / (2.0 * s2));
    }
    return k;
}

void check_inputs(const FeatureBatch& X, const FeatureBatch& Y) {
    if (X.d != Y.d) throw ArgumentError("mk_mmd: feature dimensions differ");
    if (X.d <= 0) throw ArgumentError("mk_mmd: empty feature dimension");
    if (X.n() < 2 || Y.n() < 2)
        throw ArgumentError("mk_mmd: unbiased estimate needs at least 2 rows per set");
}

}  // namespace

KernelBank median_heuristic_bank(const FeatureBatch& X, const FeatureBatch& Y) {
    check_inputs(X, Y);
    std::vector<const float*> pool;
    pool.reserve(X.n() + Y.n());
    for (size_t i = 0; i < X.n(); ++i) pool.push_back(X.row(i));
    for (size_t i = 0; i < Y.n(); ++i) pool.push_back(Y.row(i));
    std::vector<double> dists;
    dists.reserve(pool.size() * (pool.size() - 1) / 2);
    for (size_t i = 0; i < pool.size(); ++i)
        for (size_t j = i + 1; j < pool.size(); ++j)
            dists.push_back(std::sqrt(sq_dist(pool[i], pool[j], X.d)));
    std::sort(dists.begin(), dists.end());
    const size_t n = dists.size();
    double med = (n % 2 == 1) ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
    if (med <= 0) med = 1.0;  // degenerate pool: all points identical
    KernelBank bank;
    for (double mult : {0.25, 0.5, 1.0, 2.0, 4.0}) {
        bank.bandwidths.push_back(med * mult);
        bank.weights.push_back(0.2);
    }
    return bank;
}

double mk_mmd(const FeatureBatch& X, const FeatureBatch& Y, const KernelBank& bank) {
    check_inputs(X, Y);
    if (bank.bandwidths.empty() || bank.bandwidths.size() != bank.weights.size())
        throw ArgumentError("mk_mmd: malformed kernel bank");
    const int d = X.d;
    // diagonal-excluding within-set sums, all-pairs cross sum; the arguments
    // are canonicalised (size, then lexicographic row order as tie-break) so
    // swapping X and Y runs the exact same loops and is bit-exact
    const bool swap_args =
        (X.n() == Y.n())
            ? std::lexicographical_compare(X.rows.begin(), X.rows.end(), Y.rows.begin(),
                                           Y.rows.end())
            : (X.n() < Y.n());
    const FeatureBatch& A = swap_args ? Y : X;
    const FeatureBatch& B = swap_args ? X : Y;
    const size_t a = A.n(), b = B.n();
    double saa = 0, sbb = 0, sab = 0;
    for (size_t i = 0; i < a; ++i)
        for (size_t j = 0; j < a; ++j)
            if (i != j) saa += mix_kernel(sq_dist(A.row(i), A.row(j), d), bank);
    for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < b; ++j)
            if (i != j) sbb += mix_kernel(sq_dist(B.row(i), B.row(j), d), bank);
    for (size_t i = 0; i < a; ++i)
        for (size_t j = 0; j < b; ++j) sab += mix_kernel(sq_dist(A.row(i), B.row(j), d), bank);
    return saa / (double(a) * double(a - 1)) + sbb / (double(b) * double(b - 1)) -
           2.0 * sab / (double(a) * double(b));
}

double mk_mmd(const FeatureBatch& X, const FeatureBatch& Y) {
    return mk_mmd(X, Y, median_heuristic_bank(X, Y));
}

void mk_mmd_grad_y(const FeatureBatch& X, const FeatureBatch& Y, const KernelBank& bank,
                   std::vector<double>& dY) {
    check_inputs(X, Y);
    const size_t m = X.n(), n = Y.n();
    const int d = Y.d;
    dY.assign(n * size_t(d), 0.0);
    const double cy = 2.0 / (double(n) * double(n - 1));
    const double cx = 2.0 / (double(m) * double(n));
    // d/dy_p = cy sum_{j != p} G(y_j) - cx sum_i G(x_i) with
    // G(u) = sum_k w_k exp(-|u - y_p|^2 / (2 s_k^2)) (u - y_p) / s_k^2
    for (size_t p = 0; p < n; ++p) {
        double* g = dY.data() + p * size_t(d);
        const float* yp = Y.row(p);
        auto accum = [&](const float* u, double coef) {
            double d2 = sq_dist(u, yp, d);
            double scale = 0;
            for (size_t k = 0; k < bank.bandwidths.size(); ++k) {
                double s2 = bank.bandwidths[k] * bank.bandwidths[k];
                scale += bank.weights[k] * std::exp(-d2 / (2.0 * s2)) / s2;
            }
            for (int c = 0; c < d; ++c) g[c] += coef * scale * (double(u[c]) - double(yp[c]));
        };
        for (size_t j = 0; j < n; ++j)
            if (j != p) accum(Y.row(j), cy);
        for (size_t i = 0; i < m; ++i) accum(X.row(i), -cx);
    }
}

double linear_probe_auc(const FeatureBatch& features, const std::string& target,
                        const ProbeConfig& cfg) {
    const size_t n = features.n();
    if (n == 0) throw ArgumentError("linear_probe_auc: empty feature batch");
    std::vector<int> labels(n);
    for (size_t i = 0; i < n; ++i) {
        if (target == "laterality")
            labels[i] = features.meta[i].laterality;
        else if (target == "camera")
            labels[i] = features.meta[i].camera;
        else
            throw ArgumentError("linear_probe_auc: unknown target '" + target + "'");
    }
    if (std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels[0]; }))
        throw DataError("linear_probe_auc: single-class data");

    // patient-level split
    std::vector<long long> patients;
    for (const auto& m : features.meta)
        if (std::find(patients.begin(), patients.end(), m.patient_id) == patients.end())
            patients.push_back(m.patient_id);
    if (patients.size() < 2)
        throw DataError("linear_probe_auc: need at least 2 patients for a split");
    core::Rng rng(core::derive_seed(cfg.seed, 0x50524F4245ull));
    for (size_t i = patients.size(); i > 1; --i)
        std::swap(patients[i - 1], patients[rng.uniform_index(i)]);
    size_t n_train_pat = size_t(std::lround(cfg.train_fraction * double(patients.size())));
    n_train_pat = std::min(std::max<size_t>(n_train_pat, 1), patients.size() - 1);
    std::vector<long long> train_pats(patients.begin(), patients.begin() + long(n_train_pat));

    std::vector<size_t> train_idx, test_idx;
    for (size_t i = 0; i < n; ++i) {
        bool tr = std::find(train_pats.begin(), train_pats.end(), features.meta[i].patient_id) !=
                  train_pats.end();
        (tr ? train_idx : test_idx).push_back(i);
    }
    auto single_class = [&](const std::vector<size_t>& idx) {
        for (size_t i : idx)
            if (labels[i] != labels[idx[0]]) return false;
        return true;
    };
    if (train_idx.empty() || test_idx.empty() || single_class(train_idx) || single_class(test_idx))
        throw DataError("linear_probe_auc: degenerate patient split");

    // full-batch logistic regression
    const int d = features.d;
    std::vector<double> w(size_t(d), 0.0), gw(size_t(d), 0.0);
    double b = 0;
    const double inv_n = 1.0 / double(train_idx.size());
    for (int step = 0; step < cfg.steps; ++step) {
        std::fill(gw.begin(), gw.end(), 0.0);
        double gb = 0;
        for (size_t i : train_idx) {
            const float* x = features.row(i);
            double z = b;
            for (int c = 0; c < d; ++c) z += w[c] * double(x[c]);
            double p = 1.0 / (1.0 + std::exp(-z));
            double diff = (p - double(labels[i])) * inv_n;
            for (int c = 0; c < d; ++c) gw[c] += diff * double(x[c]);
            gb += diff;
        }
        for (int c = 0; c < d; ++c) w[c] -= cfg.lr * gw[c];
        b -= cfg.lr * gb;
    }

    // ROC-AUC via average ranks (ties shared)
    std::vector<std::pair<double, int>> scored;
    for (size_t i : test_idx) {
        const float* x = features.row(i);
        double z = b;
        for (int c = 0; c < d; ++c) z += w[c] * double(x[c]);
        scored.push_back({z, labels[i]});
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& c) { return a.first < c.first; });
    double rank_sum_pos = 0;
    size_t n_pos = 0, n_neg = 0;
    for (size_t i = 0; i < scored.size();) {
        size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        double avg_rank = 0.5 * (double(i + 1) + double(j));  // ranks are 1-based
        for (size_t k = i; k < j; ++k) {
            if (scored[k].second == 1) {
                rank_sum_pos += avg_rank;
                ++n_pos;
            } else {
                ++n_neg;
            }
        }
        i = j;
    }
    return (rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0) /
           (double(n_pos) * double(n_neg));
}

void write_features_csv(const std::string& path, const FeatureBatch& features) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "# D=" << features.d << " n=" << features.n() << "\n";
    out << "patient_id,laterality,camera";
    for (int c = 0; c < features.d; ++c) out << ",f" << c;
    out << "\n";
    char buf[32];
    for (size_t i = 0; i < features.n(); ++i) {
        const auto& m = features.meta[i];
        out << m.patient_id << ',' << (m.laterality == 0 ? "left" : "right") << ','
            << (m.camera == 0 ? "source" : "target");
        const float* x = features.row(i);
        for (int c = 0; c < features.d; ++c) {
            std::snprintf(buf, sizeof buf, "%.9g", double(x[c]));
            out << ',' << buf;
        }
        out << "\n";
    }
    if (!out) throw IoError("failed writing " + path);
}

FeatureBatch read_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("feature csv: empty file " + path);
    int d = -1;
    long long n_decl = -1;
    if (std::sscanf(line.c_str(), "# D=%d n=%lld", &d, &n_decl) != 2 || d <= 0 || n_decl < 0)
        throw DataError("feature csv: bad metadata line in " + path);
    if (!std::getline(in, line)) throw DataError("feature csv: missing header in " + path);
    FeatureBatch fb;
    fb.d = d;
    std::vector<float> row(size_t(d), 0.f);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        FeatureMeta m;
        if (!std::getline(ss, tok, ',')) throw DataError("feature csv: short row in " + path);
        m.patient_id = std::stoll(tok);
        if (!std::getline(ss, tok, ',')) throw DataError("feature csv: short row in " + path);
        if (tok == "left")
            m.laterality = 0;
        else if (tok == "right")
            m.laterality = 1;
        else
            throw DataError("feature csv: bad laterality '" + tok + "'");
        if (!std::getline(ss, tok, ',')) throw DataError("feature csv: short row in " + path);
        if (tok == "source")
            m.camera = 0;
        else if (tok == "target")
            m.camera = 1;
        else
            throw DataError("feature csv: bad camera '" + tok + "'");
        for (int c = 0; c < d; ++c) {
            if (!std::getline(ss, tok, ',')) throw DataError("feature csv: short row in " + path);
            row[size_t(c)] = std::stof(tok);
        }
        fb.add_row(row.data(), m);
    }
    if (static_cast<long long>(fb.n()) != n_decl)
        throw DataError("feature csv: row count does not match header in " + path);
    return fb;
}

}  // namespace clfa::metrics
