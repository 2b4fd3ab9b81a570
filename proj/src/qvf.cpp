#include "kahan/qvf.hpp"

#include <cmath>
#include <string>

#include "kahan/errors.hpp"

namespace kahan {

namespace {

void require_dim(const char* where, std::size_t expected, std::size_t got) {
    if (expected != got) {
        throw DimensionMismatch(std::string(where) + ": state has dimension " +
                                std::to_string(got) + ", field has " + std::to_string(expected));
    }
}

void require_finite(const char* where, double v) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(where) + ": non-finite coefficient");
}

} // namespace

QuadraticVectorField::QuadraticVectorField(std::size_t n, std::vector<double> a, Mat b, Vec c)
    : n_(n), a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {
    if (a_.size() != n * n * n || b_.rows() != n || b_.cols() != n || c_.size() != n)
        throw DimensionMismatch("QuadraticVectorField: coefficient shapes do not match dimension");
    // Canonicalize a_ijk = a_ikj; the step's bilinear form cannot see the
    // antisymmetric part, so this is observationally neutral.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = j + 1; k < n; ++k) {
                double& ajk = a_[(i * n + j) * n + k];
                double& akj = a_[(i * n + k) * n + j];
                const double sym = 0.5 * (ajk + akj);
                ajk = sym;
                akj = sym;
            }
    for (double v : a_) require_finite("QuadraticVectorField", v);
    for (std::size_t i = 0; i < n; ++i) {
        require_finite("QuadraticVectorField", c_[i]);
        for (std::size_t j = 0; j < n; ++j) require_finite("QuadraticVectorField", b_(i, j));
    }
}

void QvfBuilder::add_affine_product(std::size_t i, const Vec& u, double u0, const Vec& w, double w0,
                                    double coeff) {
    for (std::size_t j = 0; j < n_; ++j) {
        if (u[j] != 0.0) {
            for (std::size_t k = 0; k < n_; ++k)
                if (w[k] != 0.0) add_quadratic(i, j, k, coeff * u[j] * w[k]);
            add_linear(i, j, coeff * u[j] * w0);
        }
    }
    for (std::size_t k = 0; k < n_; ++k)
        if (w[k] != 0.0) add_linear(i, k, coeff * u0 * w[k]);
    add_constant(i, coeff * u0 * w0);
}

Vec eval_field(const QuadraticVectorField& v, const State& x) {
    const std::size_t n = v.dim();
    require_dim("eval_field", n, x.size());
    Vec f(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = v.c()[i];
        for (std::size_t j = 0; j < n; ++j) {
            double row = v.b()(i, j);
            for (std::size_t k = 0; k < n; ++k) row += v.a(i, j, k) * x[k];
            acc += row * x[j];
        }
        f[i] = acc;
    }
    return f;
}

Mat field_jacobian(const QuadraticVectorField& v, const State& x) {
    const std::size_t n = v.dim();
    require_dim("field_jacobian", n, x.size());
    Mat df(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < n; ++l) {
            double acc = v.b()(i, l);
            for (std::size_t k = 0; k < n; ++k) acc += 2.0 * v.a(i, l, k) * x[k];
            df(i, l) = acc;
        }
    return df;
}

double step_defect(const QuadraticVectorField& v, const State& x, const State& x_prime, double h) {
    const std::size_t n = v.dim();
    require_dim("step_defect", n, x.size());
    require_dim("step_defect", n, x_prime.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double rhs = v.c()[i];
        for (std::size_t j = 0; j < n; ++j) {
            double bil = 0.0;
            for (std::size_t k = 0; k < n; ++k) bil += v.a(i, j, k) * x_prime[k];
            rhs += bil * x[j] + 0.5 * v.b()(i, j) * (x[j] + x_prime[j]);
        }
        worst = std::max(worst, std::abs(x_prime[i] - x[i] - h * rhs));
    }
    return worst;
}

namespace {

// Shared by the forward and inverse step: solve (I - (h/2)Df(x)) x' = rhs.
StepResult solve_step(const QuadraticVectorField& v, const State& x, double h) {
    const std::size_t n = v.dim();
    Mat m = field_jacobian(v, x);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = (i == j ? 1.0 : 0.0) - 0.5 * h * m(i, j);

    Vec rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
        double lin = 0.0;
        for (std::size_t j = 0; j < n; ++j) lin += v.b()(i, j) * x[j];
        rhs[i] = x[i] + 0.5 * h * lin + h * v.c()[i];
    }

    LuSolver lu(std::move(m));
    StepResult out;
    out.state = lu.solve(std::move(rhs));
    out.diagnostics.condition_estimate = lu.pivot_ratio();
    out.diagnostics.residual = step_defect(v, x, out.state, h);
    return out;
}

} // namespace

StepResult kahan_step(const QuadraticVectorField& v, const State& x, double h) {
    require_dim("kahan_step", v.dim(), x.size());
    return solve_step(v, x, h);
}

StepResult kahan_inverse_step(const QuadraticVectorField& v, const State& x_prime, double h) {
    require_dim("kahan_inverse_step", v.dim(), x_prime.size());
    StepResult out = solve_step(v, x_prime, -h);
    // Report the defect of the forward equation at (x, x_prime).
    out.diagnostics.residual = step_defect(v, out.state, x_prime, h);
    return out;
}

Mat map_jacobian_at(const QuadraticVectorField& v, const State& x, const State& x_prime, double h) {
    const std::size_t n = v.dim();
    Mat mx = field_jacobian(v, x);
    Mat mp = field_jacobian(v, x_prime);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double id = (i == j) ? 1.0 : 0.0;
            mx(i, j) = id - 0.5 * h * mx(i, j);
            mp(i, j) = id + 0.5 * h * mp(i, j);
        }
    return LuSolver(std::move(mx)).solve(mp);
}

Mat map_jacobian(const QuadraticVectorField& v, const State& x, double h) {
    require_dim("map_jacobian", v.dim(), x.size());
    return map_jacobian_at(v, x, kahan_step(v, x, h).state, h);
}

QuadraticVectorField affine_conjugate(const QuadraticVectorField& v, const AffineMap& m) {
    const std::size_t n = v.dim();
    if (m.T.rows() != n || m.T.cols() != n || m.s.size() != n)
        throw DimensionMismatch("affine_conjugate: map shape does not match field dimension");

    // x = S y + d with S = T^{-1}, d = -S s; substitute into the field and
    // collect, then map through T.
    LuSolver lu(m.T);
    Mat s = lu.solve(Mat::identity(n));
    Vec d = lu.solve(m.s);
    for (double& di : d) di = -di;

    std::vector<double> a_new(n * n * n, 0.0);
    Mat b_new(n, n);
    Vec c_new(n, 0.0);

    for (std::size_t mrow = 0; mrow < n; ++mrow) {
        for (std::size_t i = 0; i < n; ++i) {
            const double t = m.T(mrow, i);
            if (t == 0.0) continue;

            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < n; ++k) {
                    const double aijk = v.a(i, j, k);
                    if (aijk == 0.0) continue;
                    for (std::size_t p = 0; p < n; ++p) {
                        const double sjp = s(j, p);
                        if (sjp == 0.0) continue;
                        for (std::size_t q = 0; q < n; ++q)
                            a_new[(mrow * n + p) * n + q] += t * aijk * sjp * s(k, q);
                        b_new(mrow, p) += t * aijk * sjp * d[k];
                    }
                    for (std::size_t q = 0; q < n; ++q)
                        b_new(mrow, q) += t * aijk * d[j] * s(k, q);
                    c_new[mrow] += t * aijk * d[j] * d[k];
                }

            for (std::size_t j = 0; j < n; ++j) {
                const double bij = v.b()(i, j);
                if (bij == 0.0) continue;
                for (std::size_t p = 0; p < n; ++p) b_new(mrow, p) += t * bij * s(j, p);
                c_new[mrow] += t * bij * d[j];
            }

            c_new[mrow] += t * v.c()[i];
        }
    }

    return QuadraticVectorField(n, std::move(a_new), std::move(b_new), std::move(c_new));
}

} // namespace kahan
