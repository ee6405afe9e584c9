// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "fedtrek/common.hpp"

namespace fedtrek {

using Vec = std::vector<double>;

// Row-major dense matrix, just large enough for the low-rank adapter algebra.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    Mat& add_scaled(const Mat& o, double s) {
        require(same_shape(o), "Mat::add_scaled: shape mismatch");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += s * o.v[i];
        return *this;
    }

    Mat& scale(double s) {
        for (double& x : v) x *= s;
        return *this;
    }

    friend Mat operator-(const Mat& a, const Mat& b) {
        require(a.same_shape(b), "Mat: shape mismatch in subtraction");
        Mat out(a.rows, a.cols);
        for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] - b.v[i];
        return out;
    }

    bool operator==(const Mat& o) const = default;
};

inline double dot(const Vec& a, const Vec& b) {
    require(a.size() == b.size(), "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// y = M^T x  (x has M.rows entries, result has M.cols).
inline Vec mat_tvec(const Mat& m, const Vec& x) {
    require(x.size() == m.rows, "mat_tvec: length mismatch");
    Vec y(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        const double* row = &m.v[r * m.cols];
        for (std::size_t c = 0; c < m.cols; ++c) y[c] += xr * row[c];
    }
    return y;
}

// y = M x  (x has M.cols entries, result has M.rows).
inline Vec mat_vec(const Mat& m, const Vec& x) {
    require(x.size() == m.cols, "mat_vec: length mismatch");
    Vec y(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = &m.v[r * m.cols];
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
    return y;
}

// out += s * a b^T
inline void add_scaled_outer(Mat& out, double s, const Vec& a, const Vec& b) {
    require(out.rows == a.size() && out.cols == b.size(), "add_scaled_outer: shape mismatch");
    for (std::size_t r = 0; r < a.size(); ++r) {
        const double sa = s * a[r];
        if (sa == 0.0) continue;
        double* row = &out.v[r * out.cols];
        for (std::size_t c = 0; c < b.size(); ++c) row[c] += sa * b[c];
    }
}

}  // namespace fedtrek
