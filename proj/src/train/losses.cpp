#include <clfa/train/losses.hpp>

#include <clfa/core/errors.hpp>
#include <clfa/core/rng.hpp>

#include <cmath>

namespace clfa::train {

void TaskWeights::validate() const {
    bool any_positive = false;
    auto check = [&](double v) {
        if (!std::isfinite(v) || v < 0) throw ArgumentError("task weights must be finite and >= 0");
        if (v > 0) any_positive = true;
    };
    for (double v : w_rgs) check(v);
    for (double v : w_cls) check(v);
    if (!std::isfinite(lambda) || lambda < 0)
        throw ArgumentError("lambda must be finite and >= 0");
    if (!any_positive) throw ArgumentError("task weights: at least one entry must be positive");
}

TaskWeights TaskWeights::weight2(double who_cvd_weight) {
    TaskWeights w;
    w.w_rgs = {who_cvd_weight, 1.0, 0.0, 0.0, 0.0};
    return w;
}

std::array<double, 5> regression_targets(const synth::LabelSet& y) {
    return {double(y.who_cvd_log), double(y.age), double(y.sbp), double(y.tc), double(y.bmi)};
}

std::array<double, 3> binary_targets(const synth::LabelSet& y) {
    return {double(y.gender), double(y.smoking), double(y.diabetes)};
}

namespace {

// max(x,0) - x y + log(1 + exp(-|x|)), the overflow-safe sigmoid BCE
double stable_bce(double x, double y) {
    return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

template <class T>
SupervisedBreakdown supervised_loss(const model::PredictionsT<T>& pred, const synth::LabelSet& y,
                                    const TaskWeights& w) {
    for (double v : w.w_rgs)
        if (v < 0) throw ArgumentError("supervised_loss: negative weight");
    for (double v : w.w_cls)
        if (v < 0) throw ArgumentError("supervised_loss: negative weight");
    auto yr = regression_targets(y);
    auto yc = binary_targets(y);
    SupervisedBreakdown out;
    for (int k = 0; k < 5; ++k) {
        double p = double(pred.regression[size_t(k)]);
        if (!std::isfinite(p)) throw NumericError("supervised_loss: non-finite prediction");
        out.rgs[size_t(k)] = w.w_rgs[size_t(k)] * (p - yr[size_t(k)]) * (p - yr[size_t(k)]);
        out.total += out.rgs[size_t(k)];
    }
    for (int k = 0; k < 3; ++k) {
        double x = double(pred.class_logits[size_t(k)]);
        if (!std::isfinite(x)) throw NumericError("supervised_loss: non-finite logit");
        out.cls[size_t(k)] = w.w_cls[size_t(k)] * stable_bce(x, yc[size_t(k)]);
        out.total += out.cls[size_t(k)];
    }
    return out;
}

template <class T>
void supervised_loss_grad(const model::PredictionsT<T>& pred, const synth::LabelSet& y,
                          const TaskWeights& w, double scale, std::array<T, 5>& d_reg,
                          std::array<T, 3>& d_logit) {
    auto yr = regression_targets(y);
    auto yc = binary_targets(y);
    for (int k = 0; k < 5; ++k)
        d_reg[size_t(k)] += T(scale * w.w_rgs[size_t(k)] * 2.0 *
                              (double(pred.regression[size_t(k)]) - yr[size_t(k)]));
    for (int k = 0; k < 3; ++k)
        d_logit[size_t(k)] += T(scale * w.w_cls[size_t(k)] *
                                (sigmoid(double(pred.class_logits[size_t(k)])) - yc[size_t(k)]));
}

template <class T>
AlignmentResult alignment_pair_loss(const std::vector<T>& z_left, const std::vector<T>& z_right,
                                    double l_sup_left, double l_sup_right) {
    if (z_left.size() != z_right.size() || z_left.empty())
        throw ArgumentError("alignment_pair_loss: feature length mismatch");
    if (!std::isfinite(l_sup_left) || !std::isfinite(l_sup_right))
        throw NumericError("alignment_pair_loss: non-finite supervised losses");
    AlignmentResult res;
    res.left_is_student = l_sup_left >= l_sup_right;
    double acc = 0;
    for (size_t i = 0; i < z_left.size(); ++i) {
        double diff = double(z_left[i]) - double(z_right[i]);
        acc += diff * diff;
    }
    res.loss = acc / double(z_left.size());
    return res;
}

template <class T>
void alignment_pair_grad(const std::vector<T>& z_left, const std::vector<T>& z_right,
                         bool left_is_student, double scale, std::vector<T>& d_left,
                         std::vector<T>& d_right) {
    const size_t d = z_left.size();
    d_left.resize(d, T(0));
    d_right.resize(d, T(0));
    std::vector<T>& ds = left_is_student ? d_left : d_right;
    const std::vector<T>& zs = left_is_student ? z_left : z_right;
    const std::vector<T>& zt = left_is_student ? z_right : z_left;
    const double c = scale * 2.0 / double(d);
    for (size_t i = 0; i < d; ++i) ds[i] += T(c * (double(zs[i]) - double(zt[i])));
}

template <class T>
SimSiamPredictor<T>::SimSiamPredictor(int d_, int hidden_, uint64_t seed) : d(d_), hidden(hidden_) {
    if (d <= 0 || hidden <= 0) throw ArgumentError("simsiam predictor: bad dimensions");
    params.add("fc1.weight", {hidden, d});
    params.add("fc1.bias", {hidden});
    params.add("fc2.weight", {d, hidden});
    params.add("fc2.bias", {d});
    params.allocate();
    core::Rng rng(seed);
    const auto& w1 = params.find("fc1.weight");
    const auto& w2 = params.find("fc2.weight");
    for (size_t i = 0; i < w1.size; ++i) params.ptr(w1.offset)[i] = T(0.02 * rng.normal());
    for (size_t i = 0; i < w2.size; ++i) params.ptr(w2.offset)[i] = T(0.02 * rng.normal());
}

template <class T>
void SimSiamPredictor<T>::identity_init() {
    if (hidden != 2 * d)
        throw std::logic_error("identity_init needs hidden == 2 d");
    T* w1 = params.ptr(params.find("fc1.weight").offset);
    T* w2 = params.ptr(params.find("fc2.weight").offset);
    for (size_t i = 0; i < size_t(hidden) * size_t(d); ++i) w1[i] = T(0);
    for (size_t i = 0; i < size_t(hidden) * size_t(d); ++i) w2[i] = T(0);
    for (int i = 0; i < d; ++i) {
        w1[size_t(i) * size_t(d) + size_t(i)] = T(1);            // top block I
        w1[size_t(i + d) * size_t(d) + size_t(i)] = T(-1);       // bottom block -I
        w2[size_t(i) * size_t(hidden) + size_t(i)] = T(1);       // left block I
        w2[size_t(i) * size_t(hidden) + size_t(i + d)] = T(-1);  // right block -I
    }
    T* b1 = params.ptr(params.find("fc1.bias").offset);
    T* b2 = params.ptr(params.find("fc2.bias").offset);
    for (int i = 0; i < hidden; ++i) b1[size_t(i)] = T(0);
    for (int i = 0; i < d; ++i) b2[size_t(i)] = T(0);
}

template <class T>
void SimSiamPredictor<T>::forward(const T* z, T* hid, T* out) const {
    const T* w1 = params.ptr(params.find("fc1.weight").offset);
    const T* b1 = params.ptr(params.find("fc1.bias").offset);
    const T* w2 = params.ptr(params.find("fc2.weight").offset);
    const T* b2 = params.ptr(params.find("fc2.bias").offset);
    for (int i = 0; i < hidden; ++i) {
        double acc = double(b1[size_t(i)]);
        for (int j = 0; j < d; ++j) acc += double(w1[size_t(i) * size_t(d) + size_t(j)]) * double(z[size_t(j)]);
        hid[size_t(i)] = acc > 0 ? T(acc) : T(0);
    }
    for (int i = 0; i < d; ++i) {
        double acc = double(b2[size_t(i)]);
        for (int j = 0; j < hidden; ++j)
            acc += double(w2[size_t(i) * size_t(hidden) + size_t(j)]) * double(hid[size_t(j)]);
        out[size_t(i)] = T(acc);
    }
}

namespace {

template <class T>
double vec_norm(const T* v, int d) {
    double s = 0;
    for (int i = 0; i < d; ++i) s += double(v[size_t(i)]) * double(v[size_t(i)]);
    return std::sqrt(s);
}

template <class T>
double vec_dot(const T* a, const T* b, int d) {
    double s = 0;
    for (int i = 0; i < d; ++i) s += double(a[size_t(i)]) * double(b[size_t(i)]);
    return s;
}

}  // namespace

template <class T>
double simsiam_alignment_loss(const std::vector<T>& z_left, const std::vector<T>& z_right,
                              const SimSiamPredictor<T>& h) {
    if (int(z_left.size()) != h.d || int(z_right.size()) != h.d)
        throw ArgumentError("simsiam_alignment_loss: feature/predictor dimension mismatch");
    std::vector<T> hid(size_t(h.hidden)), a(size_t(h.d));
    double loss = 0;
    for (int side = 0; side < 2; ++side) {
        const T* z = side == 0 ? z_left.data() : z_right.data();
        const T* tgt = side == 0 ? z_right.data() : z_left.data();
        h.forward(z, hid.data(), a.data());
        double na = vec_norm(a.data(), h.d), nt = vec_norm(tgt, h.d);
        if (na < 1e-12 || nt < 1e-12)
            throw NumericError("simsiam_alignment_loss: zero-norm feature");
        loss += -0.5 * vec_dot(a.data(), tgt, h.d) / (na * nt);
    }
    return loss;
}

template <class T>
double simsiam_alignment_backward(const std::vector<T>& z_left, const std::vector<T>& z_right,
                                  SimSiamPredictor<T>& h, double scale, std::vector<T>& d_left,
                                  std::vector<T>& d_right) {
    if (int(z_left.size()) != h.d || int(z_right.size()) != h.d)
        throw ArgumentError("simsiam_alignment_backward: dimension mismatch");
    d_left.resize(size_t(h.d), T(0));
    d_right.resize(size_t(h.d), T(0));
    const T* w1 = h.params.ptr(h.params.find("fc1.weight").offset);
    const T* w2 = h.params.ptr(h.params.find("fc2.weight").offset);
    T* gw1 = h.params.gptr(h.params.find("fc1.weight").offset);
    T* gb1 = h.params.gptr(h.params.find("fc1.bias").offset);
    T* gw2 = h.params.gptr(h.params.find("fc2.weight").offset);
    T* gb2 = h.params.gptr(h.params.find("fc2.bias").offset);
    std::vector<T> hid(size_t(h.hidden)), a(size_t(h.d));
    std::vector<double> da(size_t(h.d)), dhid(size_t(h.hidden));
    double loss = 0;
    for (int side = 0; side < 2; ++side) {
        const T* z = side == 0 ? z_left.data() : z_right.data();
        const T* tgt = side == 0 ? z_right.data() : z_left.data();
        std::vector<T>& dz = side == 0 ? d_left : d_right;
        h.forward(z, hid.data(), a.data());
        double na = vec_norm(a.data(), h.d), nt = vec_norm(tgt, h.d);
        if (na < 1e-12 || nt < 1e-12)
            throw NumericError("simsiam_alignment_backward: zero-norm feature");
        double cosv = vec_dot(a.data(), tgt, h.d) / (na * nt);
        loss += -0.5 * cosv;
        // d(-cos)/da = (cos * a/|a| - tgt/|tgt|) / |a|, times 0.5 and scale
        for (int i = 0; i < h.d; ++i)
            da[size_t(i)] = 0.5 * scale *
                            (cosv * double(a[size_t(i)]) / na - double(tgt[size_t(i)]) / nt) / na;
        for (int i = 0; i < h.d; ++i) {
            gb2[size_t(i)] += T(da[size_t(i)]);
            for (int j = 0; j < h.hidden; ++j)
                gw2[size_t(i) * size_t(h.hidden) + size_t(j)] +=
                    T(da[size_t(i)] * double(hid[size_t(j)]));
        }
        for (int j = 0; j < h.hidden; ++j) {
            double acc = 0;
            if (hid[size_t(j)] > T(0))
                for (int i = 0; i < h.d; ++i)
                    acc += da[size_t(i)] * double(w2[size_t(i) * size_t(h.hidden) + size_t(j)]);
            dhid[size_t(j)] = acc;
            gb1[size_t(j)] += T(acc);
        }
        for (int j = 0; j < h.hidden; ++j) {
            if (dhid[size_t(j)] == 0) continue;
            for (int k = 0; k < h.d; ++k)
                gw1[size_t(j) * size_t(h.d) + size_t(k)] +=
                    T(dhid[size_t(j)] * double(z[size_t(k)]));
        }
        for (int k = 0; k < h.d; ++k) {
            double acc = 0;
            for (int j = 0; j < h.hidden; ++j)
                acc += dhid[size_t(j)] * double(w1[size_t(j) * size_t(h.d) + size_t(k)]);
            dz[size_t(k)] += T(acc);
        }
    }
    return loss;
}

#define CLFA_INSTANTIATE(T)                                                                       \
    template SupervisedBreakdown supervised_loss<T>(const model::PredictionsT<T>&,               \
                                                    const synth::LabelSet&, const TaskWeights&); \
    template void supervised_loss_grad<T>(const model::PredictionsT<T>&, const synth::LabelSet&, \
                                          const TaskWeights&, double, std::array<T, 5>&,         \
                                          std::array<T, 3>&);                                     \
    template AlignmentResult alignment_pair_loss<T>(const std::vector<T>&, const std::vector<T>&, \
                                                    double, double);                             \
    template void alignment_pair_grad<T>(const std::vector<T>&, const std::vector<T>&, bool,     \
                                         double, std::vector<T>&, std::vector<T>&);              \
    template struct SimSiamPredictor<T>;                                                          \
    template double simsiam_alignment_loss<T>(const std::vector<T>&, const std::vector<T>&,      \
                                              const SimSiamPredictor<T>&);                        \
    template double simsiam_alignment_backward<T>(const std::vector<T>&, const std::vector<T>&,  \
                                                  SimSiamPredictor<T>&, double, std::vector<T>&, \
                                                  std::vector<T>&);

CLFA_INSTANTIATE(float)
CLFA_INSTANTIATE(double)
#undef CLFA_INSTANTIATE

}  // namespace clfa::train
