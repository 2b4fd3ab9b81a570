#include "kahan/integrals.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "kahan/errors.hpp"
#include "kahan/rng.hpp"

namespace kahan::integrals {

namespace {

void require_indices(const Quadratic2Form& f, const State& x, const char* where) {
    if (f.p == f.q) throw DimensionMismatch(std::string(where) + ": designated indices coincide");
    if (f.p >= x.size() || f.q >= x.size())
        throw DimensionMismatch(std::string(where) + ": designated index out of range for state of dimension " +
                                std::to_string(x.size()));
}

} // namespace

double d1(const Quadratic2Form& f) { return f.a1 * f.a3 - f.a2 * f.a2; }

double d2(const Quadratic2Form& f) {
    return 2.0 * f.a2 * f.a4 * f.a5 - f.a3 * f.a4 * f.a4 - f.a1 * f.a5 * f.a5;
}

double eval_integral(const Quadratic2Form& f, const State& x) {
    require_indices(f, x, "eval_integral");
    const double u = x[f.p], v = x[f.q];
    return 0.5 * f.a1 * u * u + f.a2 * u * v + 0.5 * f.a3 * v * v + f.a4 * u + f.a5 * v;
}

double modified_integral(const ModifiedIntegralSpec& spec, const State& x) {
    const double i0 = eval_integral(spec.form, x);
    const double dd1 = d1(spec.form);
    const double dd2 = d2(spec.form);
    const double aval = spec.A(x);
    const double corr = 0.25 * spec.h * spec.h * dd1 * aval * aval;
    const double den = 1.0 + corr;
    if (std::abs(den) < 1e-10 * (1.0 + std::abs(corr)))
        throw DivisionByZero("modified_integral: denominator vanishes at this point for this h");

    switch (spec.flavor) {
    case Flavor::Hat:
        return (i0 + 0.125 * spec.h * spec.h * dd2 * aval * aval) / den;
    case Flavor::Tilde:
        if (dd1 == 0.0)
            throw DivisionByZero("modified_integral: Tilde flavor requires D1 != 0");
        return (i0 - 0.5 * dd2 / dd1) / den;
    }
    return 0.0; // unreachable
}

double case2_modified_integral(const Quadratic2Form& f, const AffineScalar& F, double h,
                               const State& x) {
    const double i0 = eval_integral(f, x);
    const double fv = F(x);
    return i0 + h * h * fv * fv * (d1(f) * i0 - 0.5 * d2(f));
}

TailRule tail_freeze() {
    return [](const State&, double, State&) {};
}

TailRule tail_kahan(QuadraticVectorField field) {
    return [field = std::move(field)](const State& x, double h, State& x_next) {
        x_next = kahan_step(field, x, h).state;
    };
}

namespace {

// Solves the planar pair for (u', v') where B multiplies the new-point
// gradients and the old-point term enters as c_term = C * (I_v, -I_u) plus,
// for Case 1, an affine-in-(u',v') contribution from C = E(x') with
// gradient (ep, eq) folded into the matrix.
struct PlanarSolve {
    double up, vp;
};

PlanarSolve solve_planar(const Quadratic2Form& f, double h, double u, double v, double B,
                         double c_const, double ep, double eq) {
    const double iu = grad_u(f, u, v);
    const double iv = grad_v(f, u, v);

    const double m11 = 1.0 - h * (B * f.a2 + ep * iv);
    const double m12 = -h * (B * f.a3 + eq * iv);
    const double m21 = h * (B * f.a1 + ep * iu);
    const double m22 = 1.0 + h * (B * f.a2 + eq * iu);
    const double r1 = u + h * (B * f.a5 + c_const * iv);
    const double r2 = v - h * (B * f.a4 + c_const * iu);

    const double det = m11 * m22 - m12 * m21;
    const double scale = std::max({std::abs(m11), std::abs(m12), std::abs(m21), std::abs(m22)});
    if (!(std::abs(det) > 1e-13 * scale * scale))
        throw SingularStep("bc_step: planar 2x2 system is singular");
    return {(r1 * m22 - m12 * r2) / det, (m11 * r2 - m21 * r1) / det};
}

} // namespace

State planar_step_fixed_bc(const Quadratic2Form& f, double B, double C, const State& x, double h) {
    require_indices(f, x, "planar_step_fixed_bc");
    State out = x;
    const PlanarSolve s = solve_planar(f, h, x[f.p], x[f.q], B, C, 0.0, 0.0);
    out[f.p] = s.up;
    out[f.q] = s.vp;
    return out;
}

State bc_step(const Quadratic2Form& f, const BCScheme& scheme, const TailRule& tail,
              const State& x, double h) {
    require_indices(f, x, "bc_step");
    const double u = x[f.p], v = x[f.q];

    State next = x;
    if (tail) tail(x, h, next);

    switch (scheme.kind) {
    case BCScheme::Kind::Case1: {
        // B = E(x) known; C = E(x') is affine in (u', v') once the tail of
        // x' is fixed, so the solve stays linear.
        const double B = scheme.fn(x);
        double e_tail = scheme.fn.g0;
        for (std::size_t i = 0; i < scheme.fn.g.size() && i < next.size(); ++i)
            if (i != f.p && i != f.q) e_tail += scheme.fn.g[i] * next[i];
        const double ep = scheme.fn.g.size() > f.p ? scheme.fn.g[f.p] : 0.0;
        const double eq = scheme.fn.g.size() > f.q ? scheme.fn.g[f.q] : 0.0;
        const PlanarSolve s = solve_planar(f, h, u, v, B, e_tail, ep, eq);
        next[f.p] = s.up;
        next[f.q] = s.vp;
        return next;
    }
    case BCScheme::Kind::Case2: {
        // B = F(x') makes the pair nonlinear; iterate the linear solve on
        // the scalar B, starting from F(x).
        const double C = scheme.fn(x);
        double B = C;
        State trial = next;
        double prev_change = 1e300;
        for (int it = 0; it < 100; ++it) {
            const PlanarSolve s = solve_planar(f, h, u, v, B, C, 0.0, 0.0);
            const double mag = 1.0 + std::max(std::abs(s.up), std::abs(s.vp));
            const double change = std::max(std::abs(s.up - trial[f.p]), std::abs(s.vp - trial[f.q]));
            trial[f.p] = s.up;
            trial[f.q] = s.vp;
            B = scheme.fn(trial);
            if (change <= 1e-15 * mag) return trial;
            // stalled at the roundoff floor
            if (change >= prev_change && change <= 1e-13 * mag) return trial;
            prev_change = change;
        }
        throw NoConvergence("bc_step: Case 2 fixed point did not reach tolerance 1e-14 in 100 iterations");
    }
    case BCScheme::Kind::Case3Midpoint: {
        // B = C = (1/2) A((x + x')/2); iterate on the scalar.
        State mid = next;
        State trial = next;
        double s_val = 0.5 * scheme.fn(x);
        double prev_change = 1e300;
        for (int it = 0; it < 100; ++it) {
            const PlanarSolve s = solve_planar(f, h, u, v, s_val, s_val, 0.0, 0.0);
            const double mag = 1.0 + std::max(std::abs(s.up), std::abs(s.vp));
            const double change = std::max(std::abs(s.up - trial[f.p]), std::abs(s.vp - trial[f.q]));
            trial[f.p] = s.up;
            trial[f.q] = s.vp;
            for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (x[i] + trial[i]);
            s_val = 0.5 * scheme.fn(mid);
            if (change <= 1e-15 * mag) return trial;
            if (change >= prev_change && change <= 1e-13 * mag) return trial;
            prev_change = change;
        }
        throw NoConvergence("bc_step: midpoint fixed point did not reach tolerance 1e-14 in 100 iterations");
    }
    case BCScheme::Kind::Case3Frozen: {
        const double s_val = 0.5 * scheme.fn(x);
        const PlanarSolve s = solve_planar(f, h, u, v, s_val, s_val, 0.0, 0.0);
        next[f.p] = s.up;
        next[f.q] = s.vp;
        return next;
    }
    }
    throw std::logic_error("bc_step: unknown scheme");
}

double bc_defect(const Quadratic2Form& f, const BCScheme& scheme, const State& x,
                 const State& x_prime, double h) {
    const double u = x[f.p], v = x[f.q];
    const double up = x_prime[f.p], vp = x_prime[f.q];
    double B = 0.0, C = 0.0;
    switch (scheme.kind) {
    case BCScheme::Kind::Case1:
        B = scheme.fn(x);
        C = scheme.fn(x_prime);
        break;
    case BCScheme::Kind::Case2:
        B = scheme.fn(x_prime);
        C = scheme.fn(x);
        break;
    case BCScheme::Kind::Case3Midpoint: {
        State mid(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) mid[i] = 0.5 * (x[i] + x_prime[i]);
        B = C = 0.5 * scheme.fn(mid);
        break;
    }
    case BCScheme::Kind::Case3Frozen:
        B = C = 0.5 * scheme.fn(x);
        break;
    }
    const double r1 = up - u - h * (B * grad_v(f, up, vp) + C * grad_v(f, u, v));
    const double r2 = vp - v + h * (B * grad_u(f, up, vp) + C * grad_u(f, u, v));
    return std::max(std::abs(r1), std::abs(r2));
}

double check_identity(const Quadratic2Form& f, const State& x, const State& x_prime, double Bval,
                      double Cval, double h) {
    require_indices(f, x, "check_identity");
    require_indices(f, x_prime, "check_identity");
    const double dd1 = d1(f);
    if (dd1 == 0.0) throw DivisionByZero("check_identity: D1 = 0");
    const double shift = 0.5 * d2(f) / dd1;

    const double denom = eval_integral(f, x) - shift;
    if (denom == 0.0) throw DivisionByZero("check_identity: I(x) equals D2/(2 D1)");
    const double lhs = (eval_integral(f, x_prime) - shift) / denom;

    const double rhs_den = 1.0 + h * h * dd1 * Bval * Bval;
    if (rhs_den == 0.0) throw DivisionByZero("check_identity: 1 + h^2 D1 B^2 = 0");
    const double rhs = (1.0 + h * h * dd1 * Cval * Cval) / rhs_den;

    return std::abs(lhs - rhs);
}

double verify_planar_structure(const QuadraticVectorField& v, const Quadratic2Form& f,
                               const AffineScalar& A, std::size_t samples, std::uint64_t seed,
                               double box) {
    Rng rng(seed);
    const std::size_t n = v.dim();
    double worst = 0.0;
    State x(n);
    for (std::size_t s = 0; s < samples; ++s) {
        for (double& xi : x) xi = rng.uniform(-box, box);
        const Vec fx = eval_field(v, x);
        const double a = A(x);
        const double iu = grad_u(f, x[f.p], x[f.q]);
        const double iv = grad_v(f, x[f.p], x[f.q]);
        worst = std::max(worst, std::abs(fx[f.p] - a * iv));
        worst = std::max(worst, std::abs(fx[f.q] + a * iu));
    }
    return worst;
}

} // namespace kahan::integrals
