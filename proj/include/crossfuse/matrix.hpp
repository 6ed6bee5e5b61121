#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "crossfuse/error.hpp"

namespace crossfuse {

using Vec = std::vector<double>;

// Dense row-major float64 matrix. Small by design: the training core needs
// nothing beyond matvec products and elementwise arithmetic.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const {
        return {data.data() + r * cols, cols};
    }

    std::size_t size() const { return data.size(); }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

inline bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.data); }

// y = M . x
inline Vec matvec(const Matrix& m, std::span<const double> x) {
    require(x.size() == m.cols, ErrKind::dimension,
            "matvec: got vector of length " + std::to_string(x.size()) +
                ", matrix has " + std::to_string(m.cols) + " columns");
    Vec y(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* mr = m.data.data() + r * m.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) acc += mr[c] * x[c];
        y[r] = acc;
    }
    return y;
}

// y = M^T . x
inline Vec matvec_t(const Matrix& m, std::span<const double> x) {
    require(x.size() == m.rows, ErrKind::dimension,
            "matvec_t: got vector of length " + std::to_string(x.size()) +
                ", matrix has " + std::to_string(m.rows) + " rows");
    Vec y(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* mr = m.data.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) y[c] += mr[c] * x[r];
    }
    return y;
}

// M += a . b^T
inline void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b) {
    require(a.size() == m.rows && b.size() == m.cols, ErrKind::dimension,
            "add_outer: shape mismatch");
    for (std::size_t r = 0; r < m.rows; ++r) {
        double* mr = m.data.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) mr[c] += a[r] * b[c];
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrKind::dimension, "dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    require(x.size() == y.size(), ErrKind::dimension, "axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline Vec concat(std::span<const Vec> parts) {
    std::size_t total = 0;
    for (const Vec& p : parts) total += p.size();
    Vec out;
    out.reserve(total);
    for (const Vec& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

}  // namespace crossfuse
