#pragma once

// Catalog of worked example systems with their known invariants, used as
// golden fixtures by the harness and the verification suites. Each entry
// carries the field, a default initial point (generic, all coordinates in
// [0.5, 1.5], frozen here for reproducibility), and a list of labelled
// invariant evaluators with a conserved flag: conserved=true entries are
// the test contract, conserved=false entries are negative controls.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kahan/nambu.hpp"
#include "kahan/qvf.hpp"

namespace kahan::systems {

struct Invariant {
    std::string label;
    std::function<double(const State&, double h)> value;
    bool conserved = false;
};

struct SystemSpec {
    std::string name;
    QuadraticVectorField field;
    std::vector<Invariant> invariants;
    std::map<std::string, double> params;
    State default_x0;
    std::optional<nambu::NambuSpec> nambu_spec; // set when the field is a Nambu system
};

// Planar system (2 alpha x1 x2, -2 x1^2) with integral
// I = x1^2/2 + alpha x2^2/2; the Kahan map preserves I / (1 + h^2 alpha x1^2).
SystemSpec suslov(double alpha);

// Three-dimensional rigid-body-type system with the quadratic-plus-linear
// field; the preserved modification of I = (alpha/2) x2^2 - beta1 x1 - beta2 x2
// is I - (1/8) h^2 alpha beta1^2 x3^2.
SystemSpec zhukovsky_volterra(double alpha, double beta1, double beta2);

// Two Euler tops coupled through the shared third axis. I1 and I2 have
// preserved modifications with denominator 1 - (h^2/4) a1 a2 x3^2; when
// a1 a2 = a5 a6 an extra invariant in the summed variables appears.
SystemSpec coupled_tops(const std::array<double, 6>& alpha);

bool superintegrability_holds(const std::array<double, 6>& alpha, double tol);

// Deterministic-from-seed member of the integrable Nambu family, with the
// modified H and K attached as conserved invariants.
SystemSpec random_nambu(std::uint64_t seed, double coeff_bound);

// Harness entry point: construct a catalog system by name with the given
// named parameters (missing ones take documented defaults).
SystemSpec from_catalog(const std::string& name, const std::map<std::string, double>& params);

} // namespace kahan::systems
