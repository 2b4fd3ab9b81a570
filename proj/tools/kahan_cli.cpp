// Command-line front end: run trajectories, check conservation, estimate
// the convergence order, and sweep the integrable family. Exit codes:
//   0  everything within tolerance
//   1  a conserved invariant (or the measure) drifted past tolerance
//   2  a step went singular and the trajectory was truncated
//   3  configuration error

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "kahan/errors.hpp"
#include "kahan/harness.hpp"

namespace {

using namespace kahan;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_output(const std::string& path, const std::string& bytes) {
    if (path.empty()) {
        std::fwrite(bytes.data(), 1, bytes.size(), stdout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file '" + path + "'");
    out << bytes;
}

double default_tolerance() {
    if (const char* env = std::getenv("KAHAN_DEFAULT_TOL")) {
        try {
            return std::stod(env);
        } catch (...) {
            throw ConfigError("KAHAN_DEFAULT_TOL: not a number");
        }
    }
    return 1e-10;
}

struct CommonArgs {
    std::string config_path;
    std::optional<long> steps;
    std::optional<double> h;
    std::optional<std::uint64_t> seed;
    std::string out_path;
    bool halve_on_singular = false;
};

harness::RunConfig load_config(const CommonArgs& args) {
    harness::RunConfig cfg = harness::parse_config(read_file(args.config_path));
    if (args.steps) cfg.steps = *args.steps;
    if (args.h) cfg.h = *args.h;
    if (args.seed) cfg.seed = *args.seed;
    if (!args.out_path.empty()) cfg.output.path = args.out_path;
    if (args.halve_on_singular) cfg.halve_on_singular = true;
    if (cfg.steps < 1) throw ConfigError("field 'steps': must be >= 1");
    if (cfg.h == 0.0) throw ConfigError("field 'h': must be nonzero");
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->set_help_flag("--help", "print help"); // frees -h / --h for the step size
    cmd->add_option("--config", args.config_path, "run configuration (JSON)")->required();
    cmd->add_option("--steps", args.steps, "override the step count");
    cmd->add_option("--h", args.h, "override the time step");
    cmd->add_option("--seed", args.seed, "override the seed");
    cmd->add_option("--out", args.out_path, "output path (default: from config or stdout)");
    cmd->add_flag("--halve-on-singular", args.halve_on_singular,
                  "retry singular steps with h/2, up to 4 halvings");
}

int run_command(const CommonArgs& args) {
    harness::RunConfig cfg = load_config(args);
    harness::Trajectory t = harness::run_trajectory(cfg);
    const std::string bytes = cfg.output.format == harness::OutputFormat::Json
                                  ? harness::emit_trajectory_json(t)
                                  : harness::emit_trajectory_csv(t, cfg.output.floats);
    write_output(cfg.output.path, bytes);
    return t.failed_step ? 2 : 0;
}

int report_command(const CommonArgs& args, double tolerance) {
    harness::RunConfig cfg = load_config(args);
    const systems::SystemSpec spec = harness::resolve_system(cfg);
    harness::Trajectory t = harness::run_trajectory(cfg);
    const auto measure_spec =
        cfg.scheme == harness::Scheme::Kahan ? spec.nambu_spec : std::nullopt;
    harness::ConservationReport rep =
        harness::conservation_report(t, spec, tolerance, measure_spec);
    write_output(cfg.output.path, harness::emit_report_json(rep, cfg));
    if (t.failed_step) return 2;
    return rep.pass ? 0 : 1;
}

int order_command(const CommonArgs& args, std::vector<double> h_list, double horizon) {
    harness::RunConfig cfg = load_config(args);
    const systems::SystemSpec spec = harness::resolve_system(cfg);
    if (cfg.scheme != harness::Scheme::Kahan)
        throw ConfigError("order: only the kahan scheme is supported");
    State x0 = cfg.x0 ? *cfg.x0 : spec.default_x0;
    if (x0.empty()) throw ConfigError("field 'x0': required for order estimation");

    if (h_list.empty()) h_list = {cfg.h, cfg.h / 2.0, cfg.h / 4.0, cfg.h / 8.0};
    if (horizon <= 0.0) horizon = cfg.h * static_cast<double>(cfg.steps);

    const double slope = harness::order_estimate(spec, x0, horizon, h_list);
    std::printf("order %.4f over horizon %g (h:", slope, horizon);
    for (double h : h_list) std::printf(" %g", h);
    std::printf(")\n");
    return 0;
}

int verify_family_command(std::size_t count, std::uint64_t seed, long steps, double h_max,
                          double tolerance, unsigned jobs) {
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    harness::FamilySweepResult r =
        harness::verify_family(count, seed, steps, h_max, tolerance, jobs);
    std::printf("family sweep: %zu specs, %zu failures (tol %g)\n", r.count, r.failures, tolerance);
    std::printf("  worst H_mod drift        %.3e\n", r.worst_drift_h);
    std::printf("  worst K_mod drift        %.3e\n", r.worst_drift_k);
    std::printf("  worst measure residual   %.3e\n", r.worst_measure);
    std::printf("  worst h-free measure     %.3e (%zu specs eligible)\n", r.worst_flow_measure,
                r.flow_density_checked);
    std::printf("  worst flow divergence    %.3e\n", r.worst_flow_divergence);
    return r.failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kahan discretization of quadratic vector fields: trajectories, "
                 "conservation reports, order estimates and family verification"};
    app.set_help_flag("--help", "print help");
    app.require_subcommand(1);

    CommonArgs run_args, report_args, order_args;
    double tolerance = default_tolerance();
    std::vector<double> h_list;
    double horizon = 0.0;

    CLI::App* run = app.add_subcommand("run", "integrate and emit the trajectory as CSV");
    add_common(run, run_args);

    CLI::App* report = app.add_subcommand("report", "integrate and check conservation");
    add_common(report, report_args);
    report->add_option("--tol", tolerance, "drift tolerance (default 1e-10 or KAHAN_DEFAULT_TOL)");

    CLI::App* order = app.add_subcommand("order", "estimate the convergence order");
    add_common(order, order_args);
    order->add_option("--h-list", h_list, "explicit step sizes (default h, h/2, h/4, h/8)");
    order->add_option("--horizon", horizon, "time horizon (default steps * h)");

    std::size_t family_count = 100;
    std::uint64_t family_seed = 1;
    long family_steps = 1000;
    double family_h = 0.2;
    unsigned family_jobs = 0;
    double family_tol = default_tolerance();
    CLI::App* family = app.add_subcommand(
        "verify-family", "sweep random members of the integrable family through the "
                         "conservation and measure checks");
    family->set_help_flag("--help", "print help");
    family->add_option("--count", family_count, "number of random specs (default 100)");
    family->add_option("--seed", family_seed, "base seed (default 1)");
    family->add_option("--steps", family_steps, "orbit length (default 1000)");
    family->add_option("--h", family_h, "largest step size sampled (default 0.2)");
    family->add_option("--tol", family_tol, "tolerance (default 1e-10 or KAHAN_DEFAULT_TOL)");
    family->add_option("--jobs", family_jobs, "worker threads (default: hardware)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return run_command(run_args);
        if (report->parsed()) return report_command(report_args, tolerance);
        if (order->parsed()) return order_command(order_args, h_list, horizon);
        if (family->parsed())
            return verify_family_command(family_count, family_seed, family_steps, family_h,
                                         family_tol, family_jobs);
    } catch (const kahan::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 3;
    } catch (const kahan::SingularStep& e) {
        std::fprintf(stderr, "singular step: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 3;
}
