#pragma once

// Quadratic integrals in two designated variables,
//
//     I(u, v) = (1/2) a1 u^2 + a2 u v + (1/2) a3 v^2 + a4 u + a5 v,
//
// their determinants
//
//     D1 = a1 a3 - a2^2,    D2 = 2 a2 a4 a5 - a3 a4^2 - a1 a5^2,
//
// and the h^2-modified integrals that the Kahan map and the wider B/C
// family of planar discretizations preserve exactly. The B/C family
// discretizes the planar pair
//
//     du/dt = A(x) dI/dv,    dv/dt = -A(x) dI/du
//
// as
//
//     (u' - u)/h =  B(x,x') I_v(u',v') + C(x,x') I_v(u,v),
//     (v' - v)/h = -B(x,x') I_u(u',v') - C(x,x') I_u(u,v),
//
// with B on the new-point gradients and C on the old-point gradients.
// Whatever B and C are, the shifted integral I - D2/(2 D1) changes by the
// exact factor (1 + h^2 D1 C^2)/(1 + h^2 D1 B^2) per step; check_identity
// certifies that ratio numerically. The tail components of the state do
// not enter the identity at all, which bc_step exposes by taking the tail
// update as a caller-supplied rule.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "kahan/linalg.hpp"
#include "kahan/qvf.hpp"

namespace kahan::integrals {

struct Quadratic2Form {
    double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0, a5 = 0.0;
    std::size_t p = 0, q = 1; // designated variable indices, p != q

    bool operator==(const Quadratic2Form&) const = default;
};

/// A(x) = g . x + g0
struct AffineScalar {
    Vec g;
    double g0 = 0.0;

    double operator()(const State& x) const {
        double acc = g0;
        for (std::size_t i = 0; i < g.size() && i < x.size(); ++i) acc += g[i] * x[i];
        return acc;
    }
    static AffineScalar zero(std::size_t n) { return {Vec(n, 0.0), 0.0}; }
    AffineScalar scaled(double factor) const {
        AffineScalar out = *this;
        for (double& v : out.g) v *= factor;
        out.g0 *= factor;
        return out;
    }

    bool operator==(const AffineScalar&) const = default;
};

double d1(const Quadratic2Form& f);
double d2(const Quadratic2Form& f);

double eval_integral(const Quadratic2Form& f, const State& x);

// Partial derivatives of I with respect to the designated variables.
inline double grad_u(const Quadratic2Form& f, double u, double v) { return f.a1 * u + f.a2 * v + f.a4; }
inline double grad_v(const Quadratic2Form& f, double u, double v) { return f.a2 * u + f.a3 * v + f.a5; }

enum class Flavor {
    Hat,  // (I + (1/8) h^2 D2 A^2) / (1 + (1/4) h^2 D1 A^2); defined for D1 = 0 too
    Tilde // (I - D2/(2 D1)) / (1 + (1/4) h^2 D1 A^2); needs D1 != 0
};

// The A passed here is the planar prefactor of the continuous system; the
// Kahan correspondence E = A/2 is applied internally, so the denominators
// read 1 + (1/4) h^2 D1 A^2.
struct ModifiedIntegralSpec {
    Quadratic2Form form;
    AffineScalar A;
    double h = 0.0;
    Flavor flavor = Flavor::Hat;
};

double modified_integral(const ModifiedIntegralSpec& spec, const State& x);

// Case-2 (trapezoidal-family) modified integral in its D1-safe form,
//   I + h^2 F(x)^2 (D1 I - D2/2).
double case2_modified_integral(const Quadratic2Form& f, const AffineScalar& F, double h,
                               const State& x);

struct BCScheme {
    enum class Kind { Case1, Case2, Case3Midpoint, Case3Frozen };
    Kind kind;
    AffineScalar fn;

    // B = E(x), C = E(x'); Kahan's method is E = A/2.
    static BCScheme case1(AffineScalar e) { return {Kind::Case1, std::move(e)}; }
    // B = F(x'), C = F(x); the trapezoidal rule is F = A/2.
    static BCScheme case2(AffineScalar f) { return {Kind::Case2, std::move(f)}; }
    // B = C = (1/2) A((x + x')/2), the midpoint rule; preserves I itself.
    static BCScheme case3_midpoint(AffineScalar a) { return {Kind::Case3Midpoint, std::move(a)}; }
    // B = C = (1/2) A(x), almost explicit; preserves I itself.
    static BCScheme case3_frozen(AffineScalar a) { return {Kind::Case3Frozen, std::move(a)}; }
};

// Fills the non-designated components of the next state; the planar solve
// then overwrites components p and q. The preserved quantities of each case
// hold for any rule.
using TailRule = std::function<void(const State& x, double h, State& x_next)>;

TailRule tail_freeze();
TailRule tail_kahan(QuadraticVectorField field);

State bc_step(const Quadratic2Form& f, const BCScheme& scheme, const TailRule& tail,
              const State& x, double h);

// Solves the planar pair for components (p, q) with numeric B and C values,
// copying all other components. Test harness entry point for the identity.
State planar_step_fixed_bc(const Quadratic2Form& f, double B, double C, const State& x, double h);

// Max-norm defect of the planar pair at (x, x') with B, C reconstructed
// from the scheme; zero (to roundoff) for states produced by bc_step.
double bc_defect(const Quadratic2Form& f, const BCScheme& scheme, const State& x,
                 const State& x_prime, double h);

// |LHS - RHS| of the shifted-ratio identity at a step pair (x, x') produced
// with the given numeric B, C. Requires D1 != 0.
double check_identity(const Quadratic2Form& f, const State& x, const State& x_prime, double Bval,
                      double Cval, double h);

// Max over random sample points of the planar-structure defect
//   max(|f_p(x) - A(x) dI/dv|, |f_q(x) + A(x) dI/du|);
// a value at roundoff scale certifies the (f, A) decomposition of the field.
double verify_planar_structure(const QuadraticVectorField& v, const Quadratic2Form& f,
                               const AffineScalar& A, std::size_t samples,
                               std::uint64_t seed = 20240901, double box = 2.0);

} // namespace kahan::integrals
