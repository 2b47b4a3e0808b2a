#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace otdrnet {

// Dense row-major matrix of doubles. Column vectors are (n, 1).
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return v.size(); }

    void zero() { std::fill(v.begin(), v.end(), 0.0); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline void check_shape(const Matrix& m, int rows, int cols, const char* what) {
    if (m.rows != rows || m.cols != cols)
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

// y += M x  (M: m x n, x: n, y: m)
inline void matvec_add(const Matrix& M, const double* x, double* y) {
    for (int r = 0; r < M.rows; ++r) {
        const double* mr = M.row(r);
        double acc = 0.0;
        for (int c = 0; c < M.cols; ++c) acc += mr[c] * x[c];
        y[r] += acc;
    }
}

// y += M^T x  (M: m x n, x: m, y: n)
inline void matvec_t_add(const Matrix& M, const double* x, double* y) {
    for (int r = 0; r < M.rows; ++r) {
        const double* mr = M.row(r);
        const double xr = x[r];
        for (int c = 0; c < M.cols; ++c) y[c] += mr[c] * xr;
    }
}

// G += a b^T  (a: m, b: n, G: m x n)
inline void outer_add(const double* a, const double* b, Matrix& G) {
    for (int r = 0; r < G.rows; ++r) {
        double* gr = G.row(r);
        const double ar = a[r];
        for (int c = 0; c < G.cols; ++c) gr[c] += ar * b[c];
    }
}

} // namespace otdrnet
