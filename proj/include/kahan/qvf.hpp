#pragma once

// Quadratic vector fields
//
//     dx_i/dt = sum_{j,k} a_ijk x_j x_k + sum_j b_ij x_j + c_i
//
// and their Kahan discretization, which replaces each product x_j x_k by
// (x_j' x_k + x_j x_k')/2 and each linear term by its average:
//
//     (x' - x)/h = sum a_ijk (x_j' x_k + x_j x_k')/2 + b (x + x')/2 + c.
//
// The scheme is linear in x': with the coefficient tensor symmetrized in its
// last two indices it collapses to the dense solve
//
//     (I - (h/2) Df(x)) x' = x + (h/2) b x + h c,
//
// so both the map and its inverse are rational (one LU solve per step).

#include <cstddef>
#include <utility>
#include <vector>

#include "kahan/linalg.hpp"

namespace kahan {

class QuadraticVectorField {
public:
    QuadraticVectorField() = default; // empty zero-dimensional field

    // a is a flat n^3 array indexed (i*n + j)*n + k; it is symmetrized in
    // (j,k) at construction, which leaves the field and the step unchanged.
    QuadraticVectorField(std::size_t n, std::vector<double> a, Mat b, Vec c);

    static QuadraticVectorField zero(std::size_t n) {
        return QuadraticVectorField(n, std::vector<double>(n * n * n, 0.0), Mat(n, n), Vec(n, 0.0));
    }

    std::size_t dim() const { return n_; }
    double a(std::size_t i, std::size_t j, std::size_t k) const { return a_[(i * n_ + j) * n_ + k]; }
    const Mat& b() const { return b_; }
    const Vec& c() const { return c_; }

private:
    std::size_t n_ = 0;
    std::vector<double> a_; // symmetrized: a[i][j][k] == a[i][k][j]
    Mat b_;
    Vec c_;
};

// Incremental construction from affine factors; used wherever a field is
// assembled from products of affine functions (planar systems, Nambu).
class QvfBuilder {
public:
    explicit QvfBuilder(std::size_t n) : n_(n), a_(n * n * n, 0.0), b_(n, n), c_(n, 0.0) {}

    void add_quadratic(std::size_t i, std::size_t j, std::size_t k, double coeff) {
        a_[(i * n_ + j) * n_ + k] += coeff;
    }
    void add_linear(std::size_t i, std::size_t j, double coeff) { b_(i, j) += coeff; }
    void add_constant(std::size_t i, double coeff) { c_[i] += coeff; }

    // Adds coeff * (u.x + u0)(w.x + w0) to component i.
    void add_affine_product(std::size_t i, const Vec& u, double u0, const Vec& w, double w0,
                            double coeff = 1.0);

    QuadraticVectorField build() { return QuadraticVectorField(n_, std::move(a_), std::move(b_), std::move(c_)); }

private:
    std::size_t n_;
    std::vector<double> a_;
    Mat b_;
    Vec c_;
};

struct StepDiagnostics {
    // Max-norm of the step equation's defect in h-cleared form,
    // || x' - x - h*(bilinear + averaged linear + c) ||_inf.
    double residual = 0.0;
    // Pivot-ratio estimate for the step's linear system (>= 1, crude).
    double condition_estimate = 0.0;
};

struct StepResult {
    State state;
    StepDiagnostics diagnostics;
};

// y = T x + s
struct AffineMap {
    Mat T;
    Vec s;

    State apply(const State& x) const {
        State y = T.apply(x);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += s[i];
        return y;
    }
};

Vec eval_field(const QuadraticVectorField& v, const State& x);

// (Df)_il = 2 sum_k a_ilk x_k + b_il
Mat field_jacobian(const QuadraticVectorField& v, const State& x);

// Defect of the step equation at (x, x'), h-cleared form. Zero (to roundoff)
// exactly when (x, x') is a Kahan step pair.
double step_defect(const QuadraticVectorField& v, const State& x, const State& x_prime, double h);

StepResult kahan_step(const QuadraticVectorField& v, const State& x, double h);

// The step equation is symmetric under (x, x', h) -> (x', x, -h), so the
// inverse map is the forward solve with h negated.
StepResult kahan_inverse_step(const QuadraticVectorField& v, const State& x_prime, double h);

// Exact dx'/dx by implicit differentiation of the step residual:
//   dx'/dx = (I - (h/2) Df(x))^{-1} (I + (h/2) Df(x')).
Mat map_jacobian(const QuadraticVectorField& v, const State& x, double h);
Mat map_jacobian_at(const QuadraticVectorField& v, const State& x, const State& x_prime, double h);

// Push-forward under y = T x + s: returns w with y(t) solving w whenever
// x(t) solves v.
QuadraticVectorField affine_conjugate(const QuadraticVectorField& v, const AffineMap& m);

} // namespace kahan
