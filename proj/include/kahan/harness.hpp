#pragma once

// Run configuration, trajectory generation, conservation reports and the
// convergence-order estimator behind the CLI. Configuration files are JSON;
// the exact grammar is documented in the README. Trajectories are emitted
// as CSV (columns m, t, x1..xn, residual, cond), reports as JSON.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kahan/integrals.hpp"
#include "kahan/nambu.hpp"
#include "kahan/qvf.hpp"
#include "kahan/systems.hpp"

namespace kahan::harness {

enum class Scheme { Kahan, BcCase1, BcCase2, BcMidpoint, BcFrozen };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& name); // throws ConfigError

enum class FloatFormat { Shortest, Sig17 };
enum class OutputFormat { Csv, Json };

// Declares the planar structure a bc-* run discretizes: the two-variable
// form, the prefactor A of the continuous system, and the tail rule for the
// remaining components ("freeze" or "kahan"). The scheme payloads are
// derived from A with the classical conventions (Case 1: E = A/2, Case 2:
// F = A/2, Case 3: A itself).
struct PlanarConfig {
    integrals::Quadratic2Form form; // indices 0-based in memory, 1-based in files
    integrals::AffineScalar A;
    std::string tail = "freeze";

    bool operator==(const PlanarConfig&) const = default;
};

struct RawFieldConfig {
    std::size_t n = 0;
    std::vector<double> a; // flat n^3, row-major (i, j, k)
    Mat b;
    Vec c;

    bool operator==(const RawFieldConfig&) const = default;
};

// Exactly one of catalog / nambu / raw may be set; none is allowed for
// bc-* runs with a frozen tail, where the planar declaration is the system.
struct SystemConfig {
    std::optional<std::string> catalog;
    std::map<std::string, double> params;
    std::optional<nambu::NambuSpec> nambu;
    std::optional<RawFieldConfig> raw;

    bool operator==(const SystemConfig&) const = default;
};

struct OutputConfig {
    std::string path; // empty means stdout
    OutputFormat format = OutputFormat::Csv;
    FloatFormat floats = FloatFormat::Shortest;

    bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
    SystemConfig system;
    std::optional<State> x0; // catalog systems fall back to their default point
    double h = 0.0;
    long steps = 0;
    Scheme scheme = Scheme::Kahan;
    std::optional<PlanarConfig> planar;
    std::uint64_t seed = 0;
    OutputConfig output;
    bool halve_on_singular = false;

    bool operator==(const RunConfig&) const = default;
};

struct Trajectory {
    double h = 0.0;
    std::vector<State> states;                // steps + 1 entries on success
    std::vector<StepDiagnostics> diagnostics; // one per completed step
    std::optional<long> failed_step;          // index of the step that went singular
};

struct InvariantReport {
    std::string label;
    bool conserved = false;
    double initial = 0.0;
    double max_abs_drift = 0.0;
    double max_rel_drift = 0.0;
    std::optional<long> first_exceed;
    bool division_by_zero = false;
};

struct ConservationReport {
    std::vector<InvariantReport> invariants;
    std::optional<double> max_measure_residual; // Nambu systems under the Kahan scheme
    std::optional<long> measure_first_exceed;
    double tolerance = 0.0;
    std::optional<long> failed_step;
    bool pass = false;
};

RunConfig parse_config(const std::string& text); // throws ConfigError
std::string emit_config(const RunConfig& cfg);   // canonical form; parse(emit(c)) == c

// Builds the invariant catalog a run reports on: the system's own
// invariants for Kahan runs, the scheme-implied conserved quantities for
// bc-* runs, plus the planar pair's integrals whenever a planar structure
// is declared.
systems::SystemSpec resolve_system(const RunConfig& cfg);

Trajectory run_trajectory(const RunConfig& cfg);

ConservationReport conservation_report(const Trajectory& t, const systems::SystemSpec& spec,
                                       double tolerance,
                                       const std::optional<nambu::NambuSpec>& measure_spec);

// Least-squares slope of log(global error at time T) against log h, with a
// midpoint-rule reference at step h/1000 for each h. Requires at least
// three strictly decreasing step sizes, each dividing T.
double order_estimate(const systems::SystemSpec& spec, const State& x0, double T,
                      const std::vector<double>& h_list);

std::string emit_trajectory_csv(const Trajectory& t, FloatFormat fmt);
std::string emit_trajectory_json(const Trajectory& t);
std::string emit_report_json(const ConservationReport& r, const RunConfig& cfg);

std::string format_double(double v, FloatFormat fmt);

// Sweep over random family members: conserved modified integrals,
// per-step measure residuals for both densities, and the continuous-flow
// density check. Deterministic for a given (seed, count); instances run in
// parallel when jobs > 1 with order-independent aggregation.
struct FamilySweepResult {
    std::size_t count = 0;
    std::size_t failures = 0;
    double worst_drift_h = 0.0;
    double worst_drift_k = 0.0;
    double worst_measure = 0.0;
    double worst_flow_measure = 0.0;
    double worst_flow_divergence = 0.0;
    std::size_t flow_density_checked = 0; // instances where the h-free density is defined
};

FamilySweepResult verify_family(std::size_t count, std::uint64_t seed, long steps, double h_max,
                                double tolerance, unsigned jobs = 1);

} // namespace kahan::harness
