#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "nescl/common.hpp"

namespace nescl {

// Dense row-major matrix of doubles. Deliberately minimal; everything at desk
// scale fits comfortably in flat vectors.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }
    std::span<double> row_span(std::size_t i) { return {row(i), cols}; }
    std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (double x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

// Non-owning read-only view, convertible from Mat or from a row block.
struct MatView {
    const double* ptr = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    MatView() = default;
    MatView(const Mat& m) : ptr(m.data.data()), rows(m.rows), cols(m.cols) {}
    MatView(const double* p, std::size_t r, std::size_t c) : ptr(p), rows(r), cols(c) {}

    const double* row(std::size_t i) const { return ptr + i * cols; }
    std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }

    // Contiguous row block [first, first + count).
    MatView block(std::size_t first, std::size_t count) const {
        return {ptr + first * cols, count, cols};
    }
};

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    return dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// C(i, j) = A.row(i) . B.row(j); both operands row-major, shared width.
inline Mat matmul_nt(MatView a, MatView b) {
    if (a.cols != b.cols) throw ShapeError("matmul_nt: width mismatch");
    Mat c(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) ci[j] = dot(ai, b.row(j), a.cols);
    }
    return c;
}

inline double frobenius_norm(const Mat& m) {
    double s = 0.0;
    for (double x : m.data) s += x * x;
    return std::sqrt(s);
}

}  // namespace nescl
