#pragma once

// Small dense linear algebra: the systems solved here are n x n with
// n <= ~10, so a plain row-major matrix and Gaussian elimination with
// partial pivoting are all that is needed.

#include <cmath>
#include <cstddef>
#include <vector>

#include "kahan/errors.hpp"

namespace kahan {

using Vec = std::vector<double>;
using State = Vec;

class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    Vec apply(const Vec& x) const {
        Vec y(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols_; ++j) acc += data_[i * cols_ + j] * x[j];
            y[i] = acc;
        }
        return y;
    }

    double max_norm() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    bool operator==(const Mat& o) const = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline double max_norm(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// LU factorization with partial pivoting, kept around so one
// factorization can serve several right-hand sides.
class LuSolver {
public:
    // Throws SingularStep when a pivot drops below 1e-13 * max|A|.
    explicit LuSolver(Mat a);

    Vec solve(Vec rhs) const;
    Mat solve(const Mat& rhs) const; // column-wise

    double det() const;
    // Crude conditioning indicator: max|A| / min |pivot|.
    double pivot_ratio() const { return pivot_ratio_; }

private:
    Mat lu_;
    std::vector<std::size_t> perm_;
    double det_sign_ = 1.0;
    double pivot_ratio_ = 0.0;
};

inline Vec solve_linear(Mat a, Vec rhs) { return LuSolver(std::move(a)).solve(std::move(rhs)); }

// 3x3 determinant by cofactor expansion.
inline double det3(const Mat& m) {
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
         - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
         + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

} // namespace kahan
