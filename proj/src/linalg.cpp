#include "kahan/linalg.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace kahan {

LuSolver::LuSolver(Mat a) : lu_(std::move(a)), perm_(lu_.rows()) {
    const std::size_t n = lu_.rows();
    if (lu_.cols() != n) throw DimensionMismatch("LuSolver: matrix not square");

    const double scale = lu_.max_norm();
    const double pivot_tol = 1e-13 * scale;
    double min_pivot = 0.0;

    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::abs(lu_(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::abs(lu_(r, col));
            if (v > best) { best = v; piv = r; }
        }
        if (!(best > pivot_tol)) {
            throw SingularStep("pivot " + std::to_string(best) + " below tolerance " +
                               std::to_string(pivot_tol) + " in column " + std::to_string(col));
        }
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu_(col, j), lu_(piv, j));
            std::swap(perm_[col], perm_[piv]);
            det_sign_ = -det_sign_;
        }
        min_pivot = (col == 0) ? best : std::min(min_pivot, best);

        const double inv_piv = 1.0 / lu_(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = lu_(r, col) * inv_piv;
            lu_(r, col) = f;
            for (std::size_t j = col + 1; j < n; ++j) lu_(r, j) -= f * lu_(col, j);
        }
    }
    pivot_ratio_ = (min_pivot > 0.0) ? scale / min_pivot : 0.0;
}

Vec LuSolver::solve(Vec rhs) const {
    const std::size_t n = lu_.rows();
    if (rhs.size() != n) throw DimensionMismatch("LuSolver::solve: rhs size mismatch");

    Vec y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = rhs[perm_[i]];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) y[i] -= lu_(i, j) * y[j];
    for (std::size_t ii = n; ii-- > 0;) {
        for (std::size_t j = ii + 1; j < n; ++j) y[ii] -= lu_(ii, j) * y[j];
        y[ii] /= lu_(ii, ii);
    }
    return y;
}

Mat LuSolver::solve(const Mat& rhs) const {
    const std::size_t n = lu_.rows();
    if (rhs.rows() != n) throw DimensionMismatch("LuSolver::solve: rhs rows mismatch");
    Mat out(n, rhs.cols());
    Vec col(n);
    for (std::size_t j = 0; j < rhs.cols(); ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = rhs(i, j);
        Vec x = solve(col);
        for (std::size_t i = 0; i < n; ++i) out(i, j) = x[i];
    }
    return out;
}

double LuSolver::det() const {
    double d = det_sign_;
    for (std::size_t i = 0; i < lu_.rows(); ++i) d *= lu_(i, i);
    return d;
}

} // namespace kahan
