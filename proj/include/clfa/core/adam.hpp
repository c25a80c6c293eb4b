#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace clfa::core {

// Adam with coupled (L2) weight decay. beta1 is the paper's "momentum 0.9".
struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 1e-4f;
};

template <class T>
struct Adam {
    AdamConfig cfg;
    std::vector<T> m, v;
    long long t = 0;

    explicit Adam(size_t n, AdamConfig c = {}) : cfg(c), m(n, T(0)), v(n, T(0)) {}

    void step(size_t n, T* w, const T* g) {
        ++t;
        const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
        const T bc1 = T(1) - std::pow(b1, T(t));
        const T bc2 = T(1) - std::pow(b2, T(t));
        const T lr = T(cfg.lr), eps = T(cfg.eps), wd = T(cfg.weight_decay);
        for (size_t i = 0; i < n; ++i) {
            const T gi = g[i] + wd * w[i];
            m[i] = b1 * m[i] + (T(1) - b1) * gi;
            v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
            const T mh = m[i] / bc1;
            const T vh = v[i] / bc2;
            w[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
};

}  // namespace clfa::core
