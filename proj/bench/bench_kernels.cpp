// Times the OpenMP kernel dispatchers against their serial reference
// editions and checks that outputs stay bit-identical (both run the same
// per-row body, so any divergence is a bug, not a tolerance question).
//
//   bench_kernels [reps]
//
// Reported time is the best of `reps` runs (default 5) after one warmup.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "clfa/core/kernels.hpp"
#include "clfa/core/parallel.hpp"
#include "clfa/core/rng.hpp"

using namespace clfa;

namespace {

std::vector<float> random_vec(size_t n, uint64_t seed) {
    core::Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = float(rng.normal());
    return v;
}

double time_best(int reps, const std::function<void()>& f) {
    f();  // warmup
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

struct Row {
    std::string name;
    double flops;  // 0 = skip the GFLOP/s column
    double t_serial, t_parallel;
    bool identical;
};

void print_row(const Row& r) {
    printf("%-28s %10.3f ms %10.3f ms %7.2fx", r.name.c_str(), r.t_serial * 1e3,
           r.t_parallel * 1e3, r.t_serial / r.t_parallel);
    if (r.flops > 0)
        printf(" %8.2f -> %8.2f GFLOP/s", r.flops / r.t_serial * 1e-9,
               r.flops / r.t_parallel * 1e-9);
    printf("  %s\n", r.identical ? "bit-identical" : "OUTPUTS DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
    printf("threads: %d (0 = OMP default)\n", core::thread_count());
    printf("%-28s %13s %13s %8s\n", "kernel", "serial", "openmp", "speedup");

    bool all_ok = true;
    auto record = [&](Row r) {
        all_ok = all_ok && r.identical;
        print_row(r);
    };

    // gemm shapes: a square compute-bound case and the tall-skinny shape the
    // 64px model actually runs (65 tokens x 3*64 qkv projection)
    struct Shape {
        int M, K, N;
    };
    for (const Shape s : {Shape{256, 256, 256}, Shape{1024, 64, 192}}) {
        const auto a = random_vec(size_t(s.M) * s.K, 1);
        const auto b = random_vec(size_t(s.K) * s.N, 2);
        std::vector<float> c_s(size_t(s.M) * s.N), c_p(c_s.size());
        const double fl = 2.0 * s.M * s.K * s.N;
        char name[64];

        snprintf(name, sizeof name, "gemm_nn %dx%dx%d", s.M, s.K, s.N);
        const double t1 = time_best(reps, [&] {
            core::serial::gemm_nn(s.M, s.K, s.N, a.data(), b.data(), c_s.data());
        });
        const double t2 = time_best(
            reps, [&] { core::gemm_nn(s.M, s.K, s.N, a.data(), b.data(), c_p.data()); });
        record({name, fl, t1, t2, bits_equal(c_s, c_p)});

        const auto bt = random_vec(size_t(s.N) * s.K, 3);
        snprintf(name, sizeof name, "gemm_nt %dx%dx%d", s.M, s.K, s.N);
        const double t3 = time_best(reps, [&] {
            core::serial::gemm_nt(s.M, s.K, s.N, a.data(), bt.data(), c_s.data());
        });
        const double t4 = time_best(
            reps, [&] { core::gemm_nt(s.M, s.K, s.N, a.data(), bt.data(), c_p.data()); });
        record({name, fl, t3, t4, bits_equal(c_s, c_p)});

        const auto at = random_vec(size_t(s.K) * s.M, 4);
        snprintf(name, sizeof name, "gemm_tn %dx%dx%d", s.M, s.K, s.N);
        const double t5 = time_best(reps, [&] {
            core::serial::gemm_tn(s.M, s.K, s.N, at.data(), b.data(), c_s.data());
        });
        const double t6 = time_best(
            reps, [&] { core::gemm_tn(s.M, s.K, s.N, at.data(), b.data(), c_p.data()); });
        record({name, fl, t5, t6, bits_equal(c_s, c_p)});
    }

    {
        const int n = 4096, d = 256;
        const auto x = random_vec(size_t(n) * d, 5);
        const auto gamma = random_vec(size_t(d), 6);
        const auto beta = random_vec(size_t(d), 7);
        std::vector<float> y_s(size_t(n) * d), y_p(y_s.size());
        std::vector<float> mu_s(n), rs_s(n), mu_p(n), rs_p(n);
        const double t1 = time_best(reps, [&] {
            core::serial::layernorm_rows(n, d, x.data(), gamma.data(), beta.data(), y_s.data(),
                                         mu_s.data(), rs_s.data());
        });
        const double t2 = time_best(reps, [&] {
            core::layernorm_rows(n, d, x.data(), gamma.data(), beta.data(), y_p.data(),
                                 mu_p.data(), rs_p.data());
        });
        record({"layernorm_rows 4096x256", 0, t1, t2,
                bits_equal(y_s, y_p) && bits_equal(mu_s, mu_p) && bits_equal(rs_s, rs_p)});
    }

    {
        const int n = 2048, m = 256;
        const auto x = random_vec(size_t(n) * m, 8);
        std::vector<float> p_s(size_t(n) * m), p_p(p_s.size());
        const double t1 =
            time_best(reps, [&] { core::serial::softmax_rows(n, m, x.data(), p_s.data()); });
        const double t2 =
            time_best(reps, [&] { core::softmax_rows(n, m, x.data(), p_p.data()); });
        record({"softmax_rows 2048x256", 0, t1, t2, bits_equal(p_s, p_p)});
    }

    {
        const size_t n = 1u << 20;
        const auto x = random_vec(n, 9);
        const auto dy = random_vec(n, 10);
        std::vector<float> y_s(n), y_p(n);
        const double t1 = time_best(reps, [&] { core::serial::gelu(n, x.data(), y_s.data()); });
        const double t2 = time_best(reps, [&] { core::gelu(n, x.data(), y_p.data()); });
        record({"gelu 1M", 0, t1, t2, bits_equal(y_s, y_p)});

        const double t3 = time_best(
            reps, [&] { core::serial::gelu_backward(n, x.data(), dy.data(), y_s.data()); });
        const double t4 =
            time_best(reps, [&] { core::gelu_backward(n, x.data(), dy.data(), y_p.data()); });
        record({"gelu_backward 1M", 0, t3, t4, bits_equal(y_s, y_p)});
    }

    if (!all_ok) {
        printf("FAIL: at least one kernel pair diverged\n");
        return 1;
    }
    return 0;
}
