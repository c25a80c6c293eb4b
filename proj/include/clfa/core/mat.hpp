#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace clfa::core {

// Dense row-major matrix. Deliberately minimal: the math lives in kernels.hpp.
template <class T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> d;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), d(size_t(r) * size_t(c), T(0)) {}

    T* data() { return d.data(); }
    const T* data() const { return d.data(); }
    T* row(int i) { return d.data() + size_t(i) * cols; }
    const T* row(int i) const { return d.data() + size_t(i) * cols; }
    T& operator()(int i, int j) { return d[size_t(i) * cols + j]; }
    const T& operator()(int i, int j) const { return d[size_t(i) * cols + j]; }
    size_t size() const { return d.size(); }
    void zero() { std::fill(d.begin(), d.end(), T(0)); }

    template <class U>
    Mat<U> cast() const {
        Mat<U> out(rows, cols);
        for (size_t i = 0; i < d.size(); ++i) out.d[i] = U(d[i]);
        return out;
    }
};

}  // namespace clfa::core
