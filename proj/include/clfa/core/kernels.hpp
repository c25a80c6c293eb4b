#pragma once

#include <cmath>
#include <cstddef>

#include "clfa/core/parallel.hpp"

// Dense kernels used by the model and metrics. Each kernel comes in two
// editions: a plain serial reference under clfa::core::serial and an
// OpenMP-parallel dispatcher under clfa::core. Both run the same per-row
// body, so outputs are bit-identical for any thread count; tests and the
// benchmark target compare the two directly.

namespace clfa::core {

namespace detail {

template <class T>
inline void gemm_nn_row(int i, int K, int N, const T* __restrict a, const T* __restrict b,
                        T* __restrict c, bool accumulate) {
    T* ci = c + size_t(i) * N;
    if (!accumulate)
        for (int j = 0; j < N; ++j) ci[j] = T(0);
    const T* ai = a + size_t(i) * K;
    for (int k = 0; k < K; ++k) {
        const T aik = ai[k];
        const T* bk = b + size_t(k) * N;
        for (int j = 0; j < N; ++j) ci[j] += aik * bk[j];
    }
}

template <class T>
inline void gemm_nt_row(int i, int K, int N, const T* __restrict a, const T* __restrict b,
                        T* __restrict c, bool accumulate) {
    T* ci = c + size_t(i) * N;
    const T* ai = a + size_t(i) * K;
    for (int j = 0; j < N; ++j) {
        const T* bj = b + size_t(j) * K;
        T acc = T(0);
        for (int k = 0; k < K; ++k) acc += ai[k] * bj[k];
        ci[j] = accumulate ? ci[j] + acc : acc;
    }
}

template <class T>
inline void gemm_tn_row(int i, int M, int K, int N, const T* __restrict a, const T* __restrict b,
                        T* __restrict c, bool accumulate) {
    // a is K x M, result row i of C = sum_k a[k,i] * b[k,:]
    T* ci = c + size_t(i) * N;
    if (!accumulate)
        for (int j = 0; j < N; ++j) ci[j] = T(0);
    for (int k = 0; k < K; ++k) {
        const T aki = a[size_t(k) * M + i];
        const T* bk = b + size_t(k) * N;
        for (int j = 0; j < N; ++j) ci[j] += aki * bk[j];
    }
}

template <class T>
inline void layernorm_row(int i, int d, const T* __restrict x, const T* __restrict gamma,
                          const T* __restrict beta, T* __restrict y, T* __restrict mean,
                          T* __restrict rstd, T eps) {
    const T* xi = x + size_t(i) * d;
    T* yi = y + size_t(i) * d;
    T mu = T(0);
    for (int j = 0; j < d; ++j) mu += xi[j];
    mu /= T(d);
    T var = T(0);
    for (int j = 0; j < d; ++j) {
        T c = xi[j] - mu;
        var += c * c;
    }
    var /= T(d);
    T rs = T(1) / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j) yi[j] = (xi[j] - mu) * rs * gamma[j] + beta[j];
    mean[i] = mu;
    rstd[i] = rs;
}

template <class T>
inline void layernorm_backward_row(int i, int d, const T* __restrict dy, const T* __restrict x,
                                   const T* __restrict gamma, const T* __restrict mean,
                                   const T* __restrict rstd, T* __restrict dx) {
    const T* dyi = dy + size_t(i) * d;
    const T* xi = x + size_t(i) * d;
    T* dxi = dx + size_t(i) * d;
    const T mu = mean[i], rs = rstd[i];
    T sum_g = T(0), sum_gx = T(0);
    for (int j = 0; j < d; ++j) {
        T g = dyi[j] * gamma[j];
        T xh = (xi[j] - mu) * rs;
        sum_g += g;
        sum_gx += g * xh;
    }
    const T inv_d = T(1) / T(d);
    for (int j = 0; j < d; ++j) {
        T g = dyi[j] * gamma[j];
        T xh = (xi[j] - mu) * rs;
        dxi[j] = rs * (g - sum_g * inv_d - xh * sum_gx * inv_d);
    }
}

template <class T>
inline void softmax_row(int i, int m, const T* __restrict x, T* __restrict p) {
    const T* xi = x + size_t(i) * m;
    T* pi = p + size_t(i) * m;
    T mx = xi[0];
    for (int j = 1; j < m; ++j) mx = xi[j] > mx ? xi[j] : mx;
    T sum = T(0);
    for (int j = 0; j < m; ++j) {
        pi[j] = std::exp(xi[j] - mx);
        sum += pi[j];
    }
    T inv = T(1) / sum;
    for (int j = 0; j < m; ++j) pi[j] *= inv;
}

template <class T>
inline void softmax_backward_row(int i, int m, const T* __restrict p, const T* __restrict dp,
                                 T* __restrict dx) {
    const T* pi = p + size_t(i) * m;
    const T* dpi = dp + size_t(i) * m;
    T* dxi = dx + size_t(i) * m;
    T dot = T(0);
    for (int j = 0; j < m; ++j) dot += dpi[j] * pi[j];
    for (int j = 0; j < m; ++j) dxi[j] = pi[j] * (dpi[j] - dot);
}

template <class T>
inline T gelu_scalar(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <class T>
inline T gelu_grad_scalar(T x) {
    const T phi = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.39894228040143267794);
    return phi + x * pdf;
}

}  // namespace detail

// ---- serial reference ----
namespace serial {

template <class T>
void gemm_nn(int M, int K, int N, const T* a, const T* b, T* c, bool accumulate = false) {
    for (int i = 0; i < M; ++i) detail::gemm_nn_row(i, K, N, a, b, c, accumulate);
}

template <class T>
void gemm_nt(int M, int K, int N, const T* a, const T* b, T* c, bool accumulate = false) {
    for (int i = 0; i < M; ++i) detail::gemm_nt_row(i, K, N, a, b, c, accumulate);
}

template <class T>
void gemm_tn(int M, int K, int N, const T* a, const T* b, T* c, bool accumulate = false) {
    for (int i = 0; i < M; ++i) detail::gemm_tn_row(i, M, K, N, a, b, c, accumulate);
}

template <class T>
void layernorm_rows(int n, int d, const T* x, const T* gamma, const T* beta, T* y, T* mean,
                    T* rstd, T eps = T(1e-5)) {
    for (int i = 0; i < n; ++i) detail::layernorm_row(i, d, x, gamma, beta, y, mean, rstd, eps);
}

template <class T>
void softmax_rows(int n, int m, const T* x, T* p) {
    for (int i = 0; i < n; ++i) detail::softmax_row(i, m, x, p);
}

template <class T>
void gelu(size_t n, const T* x, T* y) {
    for (size_t i = 0; i < n; ++i) y[i] = detail::gelu_scalar(x[i]);
}

template <class T>
void gelu_backward(size_t n, const T* x, const T* dy, T* dx) {
    for (size_t i = 0; i < n; ++i) dx[i] = dy[i] * detail::gelu_grad_scalar(x[i]);
}

}  // namespace serial

// ---- OpenMP dispatchers ----

template <class T>
void gemm_nn(int M, int K, int N, const T* a, const T* b, T* c, bool accumulate = false) {
    if (should_parallelize(size_t(M) * K * N)) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < M; ++i) detail::gemm_nn_row(i, K, N, a, b, c, accumulate);
    } else {
        serial::gemm_nn(M, K, N, a, b, c, accumulate);
    }
}

template <class T>
void gemm_nt(int M, int K, int N, const T* a, const T* b, T* c, bool accumulate = false) {
    if (should_parallelize(size_t(M) * K * N)) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < M; ++i) detail::gemm_nt_row(i, K, N, a, b, c, accumulate);
    } else {
        serial::gemm_nt(M, K, N, a, b, c, accumulate);
    }
}

template <class T>
void gemm_tn(int M, int K, int N, const T* a, const T* b, T* c, bool accumulate = false) {
    if (should_parallelize(size_t(M) * K * N)) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < M; ++i) detail::gemm_tn_row(i, M, K, N, a, b, c, accumulate);
    } else {
        serial::gemm_tn(M, K, N, a, b, c, accumulate);
    }
}

template <class T>
void layernorm_rows(int n, int d, const T* x, const T* gamma, const T* beta, T* y, T* mean,
                    T* rstd, T eps = T(1e-5)) {
    if (should_parallelize(size_t(n) * d * 4)) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) detail::layernorm_row(i, d, x, gamma, beta, y, mean, rstd, eps);
    } else {
        serial::layernorm_rows(n, d, x, gamma, beta, y, mean, rstd, eps);
    }
}

// dgamma/dbeta accumulate; partitioned by column so accumulation order over
// rows is fixed.
template <class T>
void layernorm_rows_backward(int n, int d, const T* dy, const T* x, const T* gamma, const T* mean,
                             const T* rstd, T* dx, T* dgamma, T* dbeta) {
    const bool par = should_parallelize(size_t(n) * d * 6);
#pragma omp parallel for schedule(static) if (par)
    for (int i = 0; i < n; ++i) detail::layernorm_backward_row(i, d, dy, x, gamma, mean, rstd, dx);
#pragma omp parallel for schedule(static) if (par)
    for (int j = 0; j < d; ++j) {
        T sg = T(0), sb = T(0);
        for (int i = 0; i < n; ++i) {
            const T dyij = dy[size_t(i) * d + j];
            sg += dyij * (x[size_t(i) * d + j] - mean[i]) * rstd[i];
            sb += dyij;
        }
        dgamma[j] += sg;
        dbeta[j] += sb;
    }
}

template <class T>
void softmax_rows(int n, int m, const T* x, T* p) {
    if (should_parallelize(size_t(n) * m * 4)) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) detail::softmax_row(i, m, x, p);
    } else {
        serial::softmax_rows(n, m, x, p);
    }
}

template <class T>
void softmax_rows_backward(int n, int m, const T* p, const T* dp, T* dx) {
    const bool par = should_parallelize(size_t(n) * m * 3);
#pragma omp parallel for schedule(static) if (par)
    for (int i = 0; i < n; ++i) detail::softmax_backward_row(i, m, p, dp, dx);
}

template <class T>
void gelu(size_t n, const T* x, T* y) {
    const bool par = should_parallelize(n * 8);
#pragma omp parallel for schedule(static) if (par)
    for (long long i = 0; i < (long long)n; ++i) y[i] = detail::gelu_scalar(x[i]);
}

template <class T>
void gelu_backward(size_t n, const T* x, const T* dy, T* dx) {
    const bool par = should_parallelize(n * 10);
#pragma omp parallel for schedule(static) if (par)
    for (long long i = 0; i < (long long)n; ++i) dx[i] = dy[i] * detail::gelu_grad_scalar(x[i]);
}

// ---- small helpers (serial; called on tiny buffers) ----

template <class T>
void add_bias_rows(int n, int d, T* y, const T* b) {
    for (int i = 0; i < n; ++i) {
        T* yi = y + size_t(i) * d;
        for (int j = 0; j < d; ++j) yi[j] += b[j];
    }
}

template <class T>
void colsum_accum(int n, int d, const T* x, T* out) {
    for (int i = 0; i < n; ++i) {
        const T* xi = x + size_t(i) * d;
        for (int j = 0; j < d; ++j) out[j] += xi[j];
    }
}

template <class T>
void add_inplace(size_t n, T* y, const T* x) {
    for (size_t i = 0; i < n; ++i) y[i] += x[i];
}

template <class T>
void axpy(size_t n, T alpha, const T* x, T* y) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace clfa::core
