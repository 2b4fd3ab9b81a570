#pragma once

// Orbit helpers for conservation sweeps: run a Kahan orbit, measure the
// worst relative drift of an invariant over it, and pick an admissible step
// size. Random quadratic dynamics can race off to infinity or pass through
// near-singular fibers of the map; a step is "admissible" for a sweep when
// the whole orbit keeps the monitored denominators away from zero and the
// state norm bounded. Halving h always terminates: as h -> 0 the orbit
// collapses toward its initial point.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "kahan/errors.hpp"
#include "kahan/qvf.hpp"

namespace orbits {

using kahan::QuadraticVectorField;
using kahan::State;

inline std::vector<State> run_kahan_orbit(const QuadraticVectorField& v, const State& x0, double h,
                                          long steps) {
    std::vector<State> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    out.push_back(x0);
    State x = x0;
    for (long m = 0; m < steps; ++m) {
        x = kahan::kahan_step(v, x, h).state;
        out.push_back(x);
    }
    return out;
}

// Largest |f(x_m, h) - f(x_0, h)| / (1 + |f(x_0, h)|) over the orbit.
inline double max_rel_drift(const std::vector<State>& orbit, double h,
                            const std::function<double(const State&, double)>& invariant) {
    const double initial = invariant(orbit.front(), h);
    double worst = 0.0;
    for (const State& x : orbit) worst = std::max(worst, std::abs(invariant(x, h) - initial));
    return worst / (1.0 + std::abs(initial));
}

struct AdmissibleOrbit {
    double h = 0.0;
    std::vector<State> states;
};

// Runs orbits at h, h/2, h/4, ... until one completes with the predicate
// true at every state (the predicate sees h, since the monitored
// denominators depend on it) and the norm below the cap. Returns nothing if
// the retry budget is exhausted (callers treat that as "resample").
inline std::optional<AdmissibleOrbit> admissible_orbit(
    const QuadraticVectorField& v, const State& x0, double h0, long steps,
    const std::function<bool(const State&, double)>& pointwise_ok, double norm_cap = 25.0,
    int max_halvings = 48) {
    double h = h0;
    for (int attempt = 0; attempt <= max_halvings; ++attempt, h *= 0.5) {
        if (!pointwise_ok(x0, h)) continue;
        std::vector<State> orbit;
        orbit.reserve(static_cast<std::size_t>(steps) + 1);
        orbit.push_back(x0);
        State x = x0;
        bool ok = true;
        for (long m = 0; m < steps; ++m) {
            try {
                x = kahan::kahan_step(v, x, h).state;
            } catch (const kahan::SingularStep&) {
                ok = false;
                break;
            }
            if (kahan::max_norm(x) > norm_cap || !pointwise_ok(x, h)) {
                ok = false;
                break;
            }
            orbit.push_back(x);
        }
        if (ok) return AdmissibleOrbit{h, std::move(orbit)};
    }
    return std::nullopt;
}

} // namespace orbits
