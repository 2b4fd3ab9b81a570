#pragma once

// Generators for planar-structured quadratic fields: component p equals
// A(x) * dI/dv and component q equals -A(x) * dI/du for a random two-variable
// quadratic I and random affine A, with all remaining components filled by
// arbitrary quadratic dynamics. Fields built this way are the premise of the
// modified-integral conservation law, so they drive the conservation
// sweeps.

#include <cstddef>

#include "kahan/integrals.hpp"
#include "kahan/qvf.hpp"
#include "kahan/rng.hpp"

namespace planar_gen {

using kahan::QuadraticVectorField;
using kahan::QvfBuilder;
using kahan::Rng;
using kahan::Vec;
using kahan::integrals::AffineScalar;
using kahan::integrals::Quadratic2Form;

struct PlanarInstance {
    QuadraticVectorField field;
    Quadratic2Form form;
    AffineScalar A;
};

inline Quadratic2Form random_form(Rng& rng, std::size_t p, std::size_t q, double bound = 2.0) {
    return {rng.uniform(-bound, bound), rng.uniform(-bound, bound), rng.uniform(-bound, bound),
            rng.uniform(-bound, bound), rng.uniform(-bound, bound), p, q};
}

inline AffineScalar random_affine(Rng& rng, std::size_t n, double bound = 2.0) {
    AffineScalar a;
    a.g.resize(n);
    for (double& v : a.g) v = rng.uniform(-bound, bound);
    a.g0 = rng.uniform(-bound, bound);
    return a;
}

// Assembles the field; tail rows (components other than p, q) are random
// quadratic dynamics when with_tail_dynamics is set, zero otherwise.
inline QuadraticVectorField build_planar_field(std::size_t n, const Quadratic2Form& f,
                                               const AffineScalar& a, Rng& rng,
                                               bool with_tail_dynamics, double tail_bound = 2.0) {
    QvfBuilder b(n);
    Vec grad_v(n, 0.0), grad_u(n, 0.0);
    grad_v[f.p] = f.a2;
    grad_v[f.q] = f.a3;
    grad_u[f.p] = f.a1;
    grad_u[f.q] = f.a2;
    b.add_affine_product(f.p, a.g, a.g0, grad_v, f.a5, 1.0);
    b.add_affine_product(f.q, a.g, a.g0, grad_u, f.a4, -1.0);
    if (with_tail_dynamics) {
        for (std::size_t i = 0; i < n; ++i) {
            if (i == f.p || i == f.q) continue;
            for (std::size_t j = 0; j < n; ++j) {
                b.add_linear(i, j, rng.uniform(-tail_bound, tail_bound));
                for (std::size_t k = j; k < n; ++k)
                    b.add_quadratic(i, j, k, rng.uniform(-tail_bound, tail_bound));
            }
            b.add_constant(i, rng.uniform(-tail_bound, tail_bound));
        }
    }
    return b.build();
}

inline PlanarInstance random_planar_instance(Rng& rng, std::size_t n, double bound = 2.0,
                                             bool with_tail_dynamics = true) {
    Quadratic2Form f = random_form(rng, 0, 1, bound);
    AffineScalar a = random_affine(rng, n, bound);
    QuadraticVectorField field = build_planar_field(n, f, a, rng, with_tail_dynamics, bound);
    return {std::move(field), f, a};
}

} // namespace planar_gen
