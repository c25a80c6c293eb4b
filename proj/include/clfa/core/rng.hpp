#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace clfa::core {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic seed derivation for per-patient / per-epoch / per-sample streams.
inline uint64_t derive_seed(uint64_t base) { return splitmix64(base); }

template <class... Rest>
uint64_t derive_seed(uint64_t base, uint64_t next, Rest... rest) {
    return derive_seed(splitmix64(base ^ (next + 0x9e3779b97f4a7c15ULL + (base << 6) + (base >> 2))),
                       rest...);
}

// mt19937_64 with hand-rolled uniform/normal conversions so that streams are
// identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        // Modulo bias is negligible for n << 2^64 and keeps the stream simple.
        return engine_() % n;
    }

    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace clfa::core
