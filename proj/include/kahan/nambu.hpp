#pragma once

// The 10-parameter integrable family in R^3:
//
//     H(x,y) = (1/2) a1 x^2 + a2 xy + (1/2) a3 y^2 + a4 x + a5 y,
//     K(y,z) = (1/2) b1 y^2 + b2 yz + (1/2) b3 z^2 + b4 y + b5 z,
//
//     dx/dt = grad H x grad K = ( K_z H_y, -K_z H_x, H_x K_y ).
//
// The flow is divergence free with first integrals H and K; the Kahan map
// of the field preserves the h^2-modified integrals
//
//     Ht = (H + (1/8) h^2 D2(a) K_z^2) / (1 + (1/4) h^2 D1(a) K_z^2),
//     Kt = (K + (1/8) h^2 D2(b) H_x^2) / (1 + (1/4) h^2 D1(b) H_x^2),
//
// together with the measure g dx^dy^dz, where g is the product of the two
// denominators' reciprocals. Two integrals plus a preserved measure make
// the three-dimensional map completely integrable. When D1(a) and D1(b)
// are nonzero there is also an h-independent density
//
//     g = (H - D2(a)/(2 D1(a)))^{-1} (K - D2(b)/(2 D1(b)))^{-1},
//
// preserved by the map and by the continuous flow alike.

#include <array>
#include <cstddef>

#include "kahan/integrals.hpp"
#include "kahan/linalg.hpp"
#include "kahan/qvf.hpp"

namespace kahan::nambu {

struct NambuSpec {
    std::array<double, 5> a{}; // H(x, y) coefficients
    std::array<double, 5> b{}; // K(y, z) coefficients

    bool operator==(const NambuSpec&) const = default;
};

double H(const NambuSpec& s, const State& x);
double K(const NambuSpec& s, const State& x);

inline double Hx(const NambuSpec& s, const State& x) { return s.a[0] * x[0] + s.a[1] * x[1] + s.a[3]; }
inline double Hy(const NambuSpec& s, const State& x) { return s.a[1] * x[0] + s.a[2] * x[1] + s.a[4]; }
inline double Ky(const NambuSpec& s, const State& x) { return s.b[0] * x[1] + s.b[1] * x[2] + s.b[3]; }
inline double Kz(const NambuSpec& s, const State& x) { return s.b[1] * x[1] + s.b[2] * x[2] + s.b[4]; }

QuadraticVectorField build_nambu_field(const NambuSpec& s);

// H as a two-variable form on (x, y) with planar prefactor A = K_z, and K
// as a form on (z, y) with A = H_x; these feed the generic modified
// integral directly.
integrals::Quadratic2Form h_form(const NambuSpec& s);
integrals::AffineScalar h_prefactor(const NambuSpec& s);
integrals::Quadratic2Form k_form(const NambuSpec& s);
integrals::AffineScalar k_prefactor(const NambuSpec& s);

double modified_H(const NambuSpec& s, const State& x, double h);
double modified_K(const NambuSpec& s, const State& x, double h);

Vec grad_modified_H(const NambuSpec& s, const State& x, double h);
Vec grad_modified_K(const NambuSpec& s, const State& x, double h);

enum class DensityKind {
    Timestep, // product of the two modified-integral denominators, inverted
    Flow      // h-independent alternative; needs D1(a), D1(b) != 0
};

struct DensitySpec {
    DensityKind kind = DensityKind::Timestep;
    NambuSpec spec;
    double h = 0.0; // unused for Flow
};

double density(const DensitySpec& d, const State& x);
Vec grad_density(const DensitySpec& d, const State& x);

// Relative defect of the measure-preservation condition
//   g(x) = g(x') det(dx'/dx)
// across one Kahan step from x.
double check_measure(const NambuSpec& s, const DensitySpec& d, const State& x, double h);

// Same, with the step already taken and the field already built (hot path
// for per-step checks along a trajectory).
double measure_residual(const QuadraticVectorField& field, const DensitySpec& d, const State& x,
                        const State& x_prime, double h);

// Relative size of div(g f) at x for the h-independent density, evaluated
// in closed form; zero means the continuous flow preserves g as well.
double flow_density_check(const NambuSpec& s, const State& x);

} // namespace kahan::nambu
