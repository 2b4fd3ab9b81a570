#include "kahan/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <thread>
#include <utility>

#include <json.hpp>

#include "kahan/errors.hpp"
#include "kahan/rng.hpp"

namespace kahan::harness {

using nlohmann::json;

std::string to_string(Scheme s) {
    switch (s) {
    case Scheme::Kahan: return "kahan";
    case Scheme::BcCase1: return "bc-case1";
    case Scheme::BcCase2: return "bc-case2";
    case Scheme::BcMidpoint: return "bc-midpoint";
    case Scheme::BcFrozen: return "bc-frozen";
    }
    return "kahan";
}

Scheme scheme_from_string(const std::string& name) {
    if (name == "kahan") return Scheme::Kahan;
    if (name == "bc-case1") return Scheme::BcCase1;
    if (name == "bc-case2") return Scheme::BcCase2;
    if (name == "bc-midpoint") return Scheme::BcMidpoint;
    if (name == "bc-frozen") return Scheme::BcFrozen;
    throw ConfigError("field 'scheme': unknown scheme name '" + name +
                      "' (expected kahan, bc-case1, bc-case2, bc-midpoint or bc-frozen)");
}

// ---------------------------------------------------------------------------
// config parsing

namespace {

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) { known = true; break; }
        if (!known)
            throw ConfigError("field '" + (path.empty() ? it.key() : path + "." + it.key()) +
                              "': unknown key");
    }
}

const json& need(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end())
        throw ConfigError("field '" + (path.empty() ? std::string(key) : path + "." + key) +
                          "': missing");
    return *it;
}

double as_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError("field '" + path + "': expected a number");
    return j.get<double>();
}

long as_integer(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError("field '" + path + "': expected an integer");
    return j.get<long>();
}

std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError("field '" + path + "': expected a string");
    return j.get<std::string>();
}

Vec as_vector(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError("field '" + path + "': expected an array of numbers");
    Vec out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(as_number(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

std::array<double, 5> as_five(const json& j, const std::string& path) {
    Vec v = as_vector(j, path);
    if (v.size() != 5) throw ConfigError("field '" + path + "': expected exactly 5 numbers");
    return {v[0], v[1], v[2], v[3], v[4]};
}

integrals::Quadratic2Form parse_form(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError("field '" + path + "': expected an object");
    check_keys(j, path, {"a", "p", "q"});
    const auto a = as_five(need(j, "a", path), path + ".a");
    const long p = as_integer(need(j, "p", path), path + ".p");
    const long q = as_integer(need(j, "q", path), path + ".q");
    if (p < 1 || q < 1) throw ConfigError("field '" + path + "': indices are 1-based");
    if (p == q) throw ConfigError("field '" + path + "': p and q must differ");
    return {a[0], a[1], a[2], a[3], a[4], static_cast<std::size_t>(p - 1),
            static_cast<std::size_t>(q - 1)};
}

integrals::AffineScalar parse_affine(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError("field '" + path + "': expected an object");
    check_keys(j, path, {"g", "g0"});
    integrals::AffineScalar a;
    a.g = as_vector(need(j, "g", path), path + ".g");
    a.g0 = as_number(need(j, "g0", path), path + ".g0");
    return a;
}

SystemConfig parse_system(const json& j) {
    if (!j.is_object()) throw ConfigError("field 'system': expected an object");
    check_keys(j, "system", {"catalog", "params", "nambu", "field"});
    SystemConfig sys;
    int chosen = 0;
    if (j.contains("catalog")) {
        sys.catalog = as_string(j["catalog"], "system.catalog");
        ++chosen;
    }
    if (j.contains("params")) {
        const json& p = j["params"];
        if (!p.is_object()) throw ConfigError("field 'system.params': expected an object");
        for (auto it = p.begin(); it != p.end(); ++it)
            sys.params[it.key()] = as_number(it.value(), "system.params." + it.key());
    }
    if (j.contains("nambu")) {
        const json& nj = j["nambu"];
        if (!nj.is_object()) throw ConfigError("field 'system.nambu': expected an object");
        check_keys(nj, "system.nambu", {"a", "b"});
        nambu::NambuSpec ns;
        ns.a = as_five(need(nj, "a", "system.nambu"), "system.nambu.a");
        ns.b = as_five(need(nj, "b", "system.nambu"), "system.nambu.b");
        sys.nambu = ns;
        ++chosen;
    }
    if (j.contains("field")) {
        const json& fj = j["field"];
        if (!fj.is_object()) throw ConfigError("field 'system.field': expected an object");
        check_keys(fj, "system.field", {"n", "a", "b", "c"});
        RawFieldConfig raw;
        const long n = as_integer(need(fj, "n", "system.field"), "system.field.n");
        if (n < 1) throw ConfigError("field 'system.field.n': must be >= 1");
        raw.n = static_cast<std::size_t>(n);
        const json& aj = need(fj, "a", "system.field");
        if (aj.is_array() && !aj.empty() && aj[0].is_array()) {
            // nested [i][j][k]
            if (aj.size() != raw.n) throw ConfigError("field 'system.field.a': expected n blocks");
            for (std::size_t i = 0; i < raw.n; ++i) {
                if (!aj[i].is_array() || aj[i].size() != raw.n)
                    throw ConfigError("field 'system.field.a': expected n x n x n layout");
                for (std::size_t jj = 0; jj < raw.n; ++jj) {
                    Vec row = as_vector(aj[i][jj], "system.field.a");
                    if (row.size() != raw.n)
                        throw ConfigError("field 'system.field.a': expected n x n x n layout");
                    raw.a.insert(raw.a.end(), row.begin(), row.end());
                }
            }
        } else {
            raw.a = as_vector(aj, "system.field.a");
            if (raw.a.size() != raw.n * raw.n * raw.n)
                throw ConfigError("field 'system.field.a': expected n^3 numbers");
        }
        const json& bj = need(fj, "b", "system.field");
        if (!bj.is_array() || bj.size() != raw.n)
            throw ConfigError("field 'system.field.b': expected an n x n matrix");
        raw.b = Mat(raw.n, raw.n);
        for (std::size_t i = 0; i < raw.n; ++i) {
            Vec row = as_vector(bj[i], "system.field.b");
            if (row.size() != raw.n)
                throw ConfigError("field 'system.field.b': expected an n x n matrix");
            for (std::size_t jj = 0; jj < raw.n; ++jj) raw.b(i, jj) = row[jj];
        }
        raw.c = as_vector(need(fj, "c", "system.field"), "system.field.c");
        if (raw.c.size() != raw.n)
            throw ConfigError("field 'system.field.c': expected n numbers");
        sys.raw = std::move(raw);
        ++chosen;
    }
    if (chosen > 1)
        throw ConfigError("field 'system': declare exactly one of catalog, nambu or field");
    if (!sys.params.empty() && !sys.catalog)
        throw ConfigError("field 'system.params': only valid together with a catalog name");
    return sys;
}

} // namespace

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root: expected an object");
    check_keys(j, "", {"system", "x0", "h", "steps", "scheme", "planar", "seed", "output",
                       "halve_on_singular"});

    RunConfig cfg;
    if (j.contains("system")) cfg.system = parse_system(j["system"]);
    if (j.contains("x0")) cfg.x0 = as_vector(j["x0"], "x0");
    cfg.h = as_number(need(j, "h", ""), "h");
    if (cfg.h == 0.0) throw ConfigError("field 'h': must be nonzero");
    cfg.steps = as_integer(need(j, "steps", ""), "steps");
    if (cfg.steps < 1) throw ConfigError("field 'steps': must be >= 1");
    if (j.contains("scheme")) cfg.scheme = scheme_from_string(as_string(j["scheme"], "scheme"));
    if (j.contains("planar")) {
        const json& pj = j["planar"];
        if (!pj.is_object()) throw ConfigError("field 'planar': expected an object");
        check_keys(pj, "planar", {"form", "affine", "tail"});
        PlanarConfig pc;
        pc.form = parse_form(need(pj, "form", "planar"), "planar.form");
        pc.A = parse_affine(need(pj, "affine", "planar"), "planar.affine");
        if (pj.contains("tail")) {
            pc.tail = as_string(pj["tail"], "planar.tail");
            if (pc.tail != "freeze" && pc.tail != "kahan")
                throw ConfigError("field 'planar.tail': expected 'freeze' or 'kahan'");
        }
        cfg.planar = std::move(pc);
    }
    if (j.contains("seed")) {
        const long s = as_integer(j["seed"], "seed");
        if (s < 0) throw ConfigError("field 'seed': must be nonnegative");
        cfg.seed = static_cast<std::uint64_t>(s);
    }
    if (j.contains("output")) {
        const json& oj = j["output"];
        if (!oj.is_object()) throw ConfigError("field 'output': expected an object");
        check_keys(oj, "output", {"path", "format", "floats"});
        if (oj.contains("path")) cfg.output.path = as_string(oj["path"], "output.path");
        if (oj.contains("format")) {
            const std::string f = as_string(oj["format"], "output.format");
            if (f == "csv") cfg.output.format = OutputFormat::Csv;
            else if (f == "json") cfg.output.format = OutputFormat::Json;
            else throw ConfigError("field 'output.format': expected 'csv' or 'json'");
        }
        if (oj.contains("floats")) {
            const std::string f = as_string(oj["floats"], "output.floats");
            if (f == "shortest") cfg.output.floats = FloatFormat::Shortest;
            else if (f == "g17") cfg.output.floats = FloatFormat::Sig17;
            else throw ConfigError("field 'output.floats': expected 'shortest' or 'g17'");
        }
    }
    if (j.contains("halve_on_singular")) {
        if (!j["halve_on_singular"].is_boolean())
            throw ConfigError("field 'halve_on_singular': expected a boolean");
        cfg.halve_on_singular = j["halve_on_singular"].get<bool>();
    }

    // cross-field validation
    const bool has_system = cfg.system.catalog || cfg.system.nambu || cfg.system.raw;
    if (cfg.scheme == Scheme::Kahan && !has_system)
        throw ConfigError("field 'system': required for the kahan scheme");
    if (cfg.scheme != Scheme::Kahan && !cfg.planar)
        throw ConfigError("field 'planar': bc-* schemes need a declared form and affine factor");
    if (cfg.planar && cfg.planar->tail == "kahan" && !has_system)
        throw ConfigError("field 'system': required when planar.tail is 'kahan'");
    if (!cfg.x0 && !cfg.system.catalog)
        throw ConfigError("field 'x0': required unless the system comes from the catalog");
    return cfg;
}

std::string emit_config(const RunConfig& cfg) {
    json j;
    const bool has_system = cfg.system.catalog || cfg.system.nambu || cfg.system.raw;
    if (has_system) {
        json sys = json::object();
        if (cfg.system.catalog) {
            sys["catalog"] = *cfg.system.catalog;
            if (!cfg.system.params.empty()) {
                json p = json::object();
                for (const auto& [k, v] : cfg.system.params) p[k] = v;
                sys["params"] = std::move(p);
            }
        } else if (cfg.system.nambu) {
            sys["nambu"] = {{"a", cfg.system.nambu->a}, {"b", cfg.system.nambu->b}};
        } else if (cfg.system.raw) {
            const RawFieldConfig& raw = *cfg.system.raw;
            json a = json::array();
            for (std::size_t i = 0; i < raw.n; ++i) {
                json block = json::array();
                for (std::size_t jj = 0; jj < raw.n; ++jj) {
                    json row = json::array();
                    for (std::size_t k = 0; k < raw.n; ++k)
                        row.push_back(raw.a[(i * raw.n + jj) * raw.n + k]);
                    block.push_back(std::move(row));
                }
                a.push_back(std::move(block));
            }
            json b = json::array();
            for (std::size_t i = 0; i < raw.n; ++i) {
                json row = json::array();
                for (std::size_t jj = 0; jj < raw.n; ++jj) row.push_back(raw.b(i, jj));
                b.push_back(std::move(row));
            }
            sys["field"] = {{"n", raw.n}, {"a", std::move(a)}, {"b", std::move(b)}, {"c", raw.c}};
        }
        j["system"] = std::move(sys);
    }
    if (cfg.x0) j["x0"] = *cfg.x0;
    j["h"] = cfg.h;
    j["steps"] = cfg.steps;
    j["scheme"] = to_string(cfg.scheme);
    if (cfg.planar) {
        j["planar"] = {{"form",
                        {{"a",
                          {cfg.planar->form.a1, cfg.planar->form.a2, cfg.planar->form.a3,
                           cfg.planar->form.a4, cfg.planar->form.a5}},
                         {"p", cfg.planar->form.p + 1},
                         {"q", cfg.planar->form.q + 1}}},
                       {"affine", {{"g", cfg.planar->A.g}, {"g0", cfg.planar->A.g0}}},
                       {"tail", cfg.planar->tail}};
    }
    j["seed"] = cfg.seed;
    j["output"] = {{"path", cfg.output.path},
                   {"format", cfg.output.format == OutputFormat::Csv ? "csv" : "json"},
                   {"floats", cfg.output.floats == FloatFormat::Shortest ? "shortest" : "g17"}};
    j["halve_on_singular"] = cfg.halve_on_singular;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// system resolution

namespace {

systems::SystemSpec base_system(const RunConfig& cfg) {
    if (cfg.system.catalog) {
        auto params = cfg.system.params;
        // the run seed doubles as the generator seed unless given explicitly
        if (*cfg.system.catalog == "random-nambu" && !params.count("seed"))
            params["seed"] = static_cast<double>(cfg.seed);
        return systems::from_catalog(*cfg.system.catalog, params);
    }
    if (cfg.system.nambu) {
        const nambu::NambuSpec n = *cfg.system.nambu;
        systems::SystemSpec s;
        s.name = "nambu";
        s.field = nambu::build_nambu_field(n);
        s.invariants = {
            {"H", [n](const State& x, double) { return nambu::H(n, x); }, false},
            {"K", [n](const State& x, double) { return nambu::K(n, x); }, false},
            {"H_mod", [n](const State& x, double h) { return nambu::modified_H(n, x, h); }, true},
            {"K_mod", [n](const State& x, double h) { return nambu::modified_K(n, x, h); }, true},
        };
        s.nambu_spec = n;
        return s;
    }
    if (cfg.system.raw) {
        systems::SystemSpec s;
        s.name = "field";
        s.field = QuadraticVectorField(cfg.system.raw->n, cfg.system.raw->a, cfg.system.raw->b,
                                       cfg.system.raw->c);
        return s;
    }
    // planar-only run: a placeholder zero field of the x0 dimension
    systems::SystemSpec s;
    s.name = "planar";
    s.field = QuadraticVectorField::zero(cfg.x0 ? cfg.x0->size() : 0);
    return s;
}

} // namespace

systems::SystemSpec resolve_system(const RunConfig& cfg) {
    systems::SystemSpec spec = base_system(cfg);
    if (!cfg.planar) return spec;

    const integrals::Quadratic2Form form = cfg.planar->form;
    const integrals::AffineScalar a = cfg.planar->A;
    const bool bc_run = cfg.scheme != Scheme::Kahan;

    if (bc_run) spec.invariants.clear(); // bc maps do not preserve the field's own invariants

    const bool plain_conserved =
        cfg.scheme == Scheme::BcMidpoint || cfg.scheme == Scheme::BcFrozen;
    spec.invariants.push_back(
        {"planar:I",
         [form](const State& x, double) { return integrals::eval_integral(form, x); },
         plain_conserved});

    if (cfg.scheme == Scheme::Kahan || cfg.scheme == Scheme::BcCase1) {
        spec.invariants.push_back(
            {"planar:I_mod",
             [form, a](const State& x, double h) {
                 return integrals::modified_integral({form, a, h, integrals::Flavor::Hat}, x);
             },
             true});
        if (integrals::d1(form) != 0.0)
            spec.invariants.push_back(
                {"planar:I_shifted",
                 [form, a](const State& x, double h) {
                     return integrals::modified_integral({form, a, h, integrals::Flavor::Tilde}, x);
                 },
                 cfg.scheme == Scheme::BcCase1});
    }
    if (cfg.scheme == Scheme::BcCase2) {
        const integrals::AffineScalar f_half = a.scaled(0.5);
        spec.invariants.push_back(
            {"planar:I_mod2",
             [form, f_half](const State& x, double h) {
                 return integrals::case2_modified_integral(form, f_half, h, x);
             },
             true});
    }
    return spec;
}

// ---------------------------------------------------------------------------
// trajectories

namespace {

struct Stepper {
    std::function<StepResult(const State&, double)> step;
};

Stepper make_stepper(const RunConfig& cfg, const systems::SystemSpec& spec) {
    if (cfg.scheme == Scheme::Kahan) {
        const QuadraticVectorField& field = spec.field;
        return {[&field](const State& x, double h) { return kahan_step(field, x, h); }};
    }
    const PlanarConfig& pc = *cfg.planar;
    integrals::BCScheme scheme = [&] {
        switch (cfg.scheme) {
        case Scheme::BcCase1: return integrals::BCScheme::case1(pc.A.scaled(0.5));
        case Scheme::BcCase2: return integrals::BCScheme::case2(pc.A.scaled(0.5));
        case Scheme::BcMidpoint: return integrals::BCScheme::case3_midpoint(pc.A);
        default: return integrals::BCScheme::case3_frozen(pc.A);
        }
    }();
    integrals::TailRule tail = pc.tail == "kahan" ? integrals::tail_kahan(spec.field)
                                                  : integrals::tail_freeze();
    const integrals::Quadratic2Form form = pc.form;
    return {[form, scheme = std::move(scheme), tail = std::move(tail)](const State& x, double h) {
        StepResult r;
        r.state = integrals::bc_step(form, scheme, tail, x, h);
        r.diagnostics.residual = integrals::bc_defect(form, scheme, x, r.state, h);
        r.diagnostics.condition_estimate = 0.0; // not tracked for planar schemes
        return r;
    }};
}

// One grid step, optionally substepping on singularities: a failed step at
// h is retried as two steps at h/2, recursively, at most `depth` levels.
StepResult robust_step(const Stepper& st, const State& x, double h, int depth) {
    try {
        return st.step(x, h);
    } catch (const SingularStep&) {
        if (depth <= 0) throw;
    }
    StepResult first = robust_step(st, x, 0.5 * h, depth - 1);
    StepResult second = robust_step(st, first.state, 0.5 * h, depth - 1);
    second.diagnostics.residual = std::max(first.diagnostics.residual, second.diagnostics.residual);
    second.diagnostics.condition_estimate =
        std::max(first.diagnostics.condition_estimate, second.diagnostics.condition_estimate);
    return second;
}

} // namespace

Trajectory run_trajectory(const RunConfig& cfg) {
    const systems::SystemSpec spec = resolve_system(cfg);
    State x0;
    if (cfg.x0) {
        x0 = *cfg.x0;
    } else {
        if (spec.default_x0.empty())
            throw ConfigError("field 'x0': this system has no default initial point");
        x0 = spec.default_x0;
    }
    const bool needs_field = cfg.scheme == Scheme::Kahan ||
                             (cfg.planar && cfg.planar->tail == "kahan");
    if (needs_field && x0.size() != spec.field.dim())
        throw ConfigError("field 'x0': dimension " + std::to_string(x0.size()) +
                          " does not match the system dimension " + std::to_string(spec.field.dim()));
    if (cfg.planar && (cfg.planar->form.p >= x0.size() || cfg.planar->form.q >= x0.size()))
        throw ConfigError("field 'planar.form': designated indices exceed the state dimension");

    const Stepper st = make_stepper(cfg, spec);
    Trajectory t;
    t.h = cfg.h;
    t.states.reserve(static_cast<std::size_t>(cfg.steps) + 1);
    t.states.push_back(x0);
    State x = x0;
    for (long m = 0; m < cfg.steps; ++m) {
        try {
            StepResult r = cfg.halve_on_singular ? robust_step(st, x, cfg.h, 4)
                                                 : st.step(x, cfg.h);
            x = std::move(r.state);
            t.states.push_back(x);
            t.diagnostics.push_back(r.diagnostics);
        } catch (const SingularStep&) {
            t.failed_step = m;
            break;
        } catch (const NoConvergence&) {
            t.failed_step = m;
            break;
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// reports

ConservationReport conservation_report(const Trajectory& t, const systems::SystemSpec& spec,
                                       double tolerance,
                                       const std::optional<nambu::NambuSpec>& measure_spec) {
    ConservationReport rep;
    rep.tolerance = tolerance;
    rep.failed_step = t.failed_step;

    for (const systems::Invariant& inv : spec.invariants) {
        InvariantReport ir;
        ir.label = inv.label;
        ir.conserved = inv.conserved;
        bool have_initial = false;
        for (std::size_t m = 0; m < t.states.size(); ++m) {
            double value = 0.0;
            try {
                value = inv.value(t.states[m], t.h);
            } catch (const DivisionByZero&) {
                ir.division_by_zero = true;
                continue;
            }
            if (!have_initial) {
                ir.initial = value;
                have_initial = true;
                continue;
            }
            const double drift = std::abs(value - ir.initial);
            ir.max_abs_drift = std::max(ir.max_abs_drift, drift);
            const double rel = drift / (1.0 + std::abs(ir.initial));
            ir.max_rel_drift = std::max(ir.max_rel_drift, rel);
            if (!ir.first_exceed && rel > tolerance) ir.first_exceed = static_cast<long>(m);
        }
        rep.invariants.push_back(std::move(ir));
    }

    if (measure_spec && t.states.size() > 1) {
        const QuadraticVectorField field = nambu::build_nambu_field(*measure_spec);
        const nambu::DensitySpec dens{nambu::DensityKind::Timestep, *measure_spec, t.h};
        double worst = 0.0;
        std::optional<long> first;
        for (std::size_t m = 0; m + 1 < t.states.size(); ++m) {
            double r;
            try {
                r = nambu::measure_residual(field, dens, t.states[m], t.states[m + 1], t.h);
            } catch (const DivisionByZero&) {
                r = std::numeric_limits<double>::infinity();
            } catch (const SingularStep&) {
                r = std::numeric_limits<double>::infinity();
            }
            worst = std::max(worst, r);
            if (!first && r > tolerance) first = static_cast<long>(m + 1);
        }
        rep.max_measure_residual = worst;
        rep.measure_first_exceed = first;
    }

    bool ok = !t.failed_step.has_value();
    for (const InvariantReport& ir : rep.invariants) {
        if (!ir.conserved) continue;
        if (ir.division_by_zero || ir.max_rel_drift > tolerance) ok = false;
    }
    if (rep.max_measure_residual && *rep.max_measure_residual > tolerance) ok = false;
    rep.pass = ok;
    return rep;
}

// ---------------------------------------------------------------------------
// order estimation

namespace {

State midpoint_step_impl(const QuadraticVectorField& v, const State& x, double h) {
    const std::size_t n = v.dim();
    State xp = x;
    double prev_change = 1e300;
    for (int it = 0; it < 200; ++it) {
        State mid(n);
        for (std::size_t i = 0; i < n; ++i) mid[i] = 0.5 * (x[i] + xp[i]);
        Vec f = eval_field(v, mid);
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double nv = x[i] + h * f[i];
            change = std::max(change, std::abs(nv - xp[i]));
            xp[i] = nv;
        }
        if (change <= 1e-15 * (1.0 + max_norm(xp)) || change >= prev_change) break;
        prev_change = change;
    }
    return xp;
}

} // namespace

double order_estimate(const systems::SystemSpec& spec, const State& x0, double T,
                      const std::vector<double>& h_list) {
    if (h_list.size() < 3)
        throw std::invalid_argument("order_estimate: need at least three step sizes");
    for (std::size_t i = 1; i < h_list.size(); ++i)
        if (!(h_list[i] < h_list[i - 1]))
            throw std::invalid_argument("order_estimate: step sizes must decrease strictly");

    std::vector<double> log_h, log_e;
    for (double h : h_list) {
        const double steps_real = T / h;
        const long steps = std::lround(steps_real);
        if (std::abs(steps_real - static_cast<double>(steps)) > 1e-9 * std::abs(steps_real))
            throw std::invalid_argument("order_estimate: T/h must be an integer for every h");

        State x = x0;
        for (long m = 0; m < steps; ++m) x = kahan_step(spec.field, x, h).state;

        const long refine = 1000;
        State ref = x0;
        const double hr = h / static_cast<double>(refine);
        for (long m = 0; m < steps * refine; ++m) ref = midpoint_step_impl(spec.field, ref, hr);

        double err = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - ref[i]));
        log_h.push_back(std::log(h));
        log_e.push_back(std::log(std::max(err, 1e-300)));
    }

    const std::size_t n = log_h.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += log_h[i];
        sy += log_e[i];
        sxx += log_h[i] * log_h[i];
        sxy += log_h[i] * log_e[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// emission

std::string format_double(double v, FloatFormat fmt) {
    char buf[64];
    if (fmt == FloatFormat::Shortest) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        (void)ec;
        return std::string(buf, ptr);
    }
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string emit_trajectory_csv(const Trajectory& t, FloatFormat fmt) {
    std::string out;
    const std::size_t n = t.states.empty() ? 0 : t.states.front().size();
    out += "m,t";
    for (std::size_t i = 1; i <= n; ++i) out += ",x" + std::to_string(i);
    out += ",residual,cond\n";
    for (std::size_t m = 0; m < t.states.size(); ++m) {
        out += std::to_string(m);
        out += ',';
        out += format_double(static_cast<double>(m) * t.h, fmt);
        for (double xi : t.states[m]) {
            out += ',';
            out += format_double(xi, fmt);
        }
        if (m == 0) {
            out += ",0,0\n";
        } else {
            const StepDiagnostics& d = t.diagnostics[m - 1];
            out += ',';
            out += format_double(d.residual, fmt);
            out += ',';
            out += format_double(d.condition_estimate, fmt);
            out += '\n';
        }
    }
    return out;
}

std::string emit_trajectory_json(const Trajectory& t) {
    json j;
    j["h"] = t.h;
    j["steps"] = t.states.empty() ? 0 : static_cast<long>(t.states.size()) - 1;
    j["states"] = t.states;
    json res = json::array(), cond = json::array();
    for (const StepDiagnostics& d : t.diagnostics) {
        res.push_back(d.residual);
        cond.push_back(d.condition_estimate);
    }
    j["residuals"] = std::move(res);
    j["condition_estimates"] = std::move(cond);
    j["failed_step"] = t.failed_step ? json(*t.failed_step) : json(nullptr);
    return j.dump(2) + "\n";
}

std::string emit_report_json(const ConservationReport& r, const RunConfig& cfg) {
    json j;
    j["scheme"] = to_string(cfg.scheme);
    j["h"] = cfg.h;
    j["steps"] = cfg.steps;
    j["seed"] = cfg.seed;
    j["tolerance"] = r.tolerance;
    if (cfg.system.catalog) j["system"] = *cfg.system.catalog;
    else if (cfg.system.nambu) j["system"] = "nambu";
    else if (cfg.system.raw) j["system"] = "field";
    else j["system"] = "planar";
    json invs = json::array();
    for (const InvariantReport& ir : r.invariants) {
        json e;
        e["label"] = ir.label;
        e["conserved"] = ir.conserved;
        e["initial"] = ir.initial;
        e["max_abs_drift"] = ir.max_abs_drift;
        e["max_rel_drift"] = ir.max_rel_drift;
        e["first_exceed"] = ir.first_exceed ? json(*ir.first_exceed) : json(nullptr);
        e["division_by_zero"] = ir.division_by_zero;
        invs.push_back(std::move(e));
    }
    j["invariants"] = std::move(invs);
    if (r.max_measure_residual) {
        j["measure"] = {{"max_residual", *r.max_measure_residual},
                        {"first_exceed",
                         r.measure_first_exceed ? json(*r.measure_first_exceed) : json(nullptr)}};
    } else {
        j["measure"] = nullptr;
    }
    j["failed_step"] = r.failed_step ? json(*r.failed_step) : json(nullptr);
    j["pass"] = r.pass;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// family sweep

namespace {

struct InstanceOutcome {
    bool failed = false;
    double drift_h = 0.0, drift_k = 0.0;
    double measure = 0.0, flow_measure = 0.0, flow_div = 0.0;
    bool flow_checked = false;
};

InstanceOutcome run_family_instance(std::uint64_t seed, std::size_t index, long steps,
                                    double h_max, double tolerance) {
    Rng rng(mix_seed(seed, index));
    nambu::NambuSpec s;
    for (double& c : s.a) c = rng.uniform(-2.0, 2.0);
    for (double& c : s.b) c = rng.uniform(-2.0, 2.0);
    const QuadraticVectorField field = nambu::build_nambu_field(s);
    State x0 = {rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)};
    double h = rng.uniform(0.01, h_max);

    const double d1a = s.a[0] * s.a[2] - s.a[1] * s.a[1];
    const double d1b = s.b[0] * s.b[2] - s.b[1] * s.b[1];

    auto denominators_ok = [&](const State& x, double hh) {
        const double kz = nambu::Kz(s, x);
        const double hx = nambu::Hx(s, x);
        return std::abs(1.0 + 0.25 * hh * hh * d1a * kz * kz) >= 0.1 &&
               std::abs(1.0 + 0.25 * hh * hh * d1b * hx * hx) >= 0.1;
    };

    InstanceOutcome out;
    for (int attempt = 0; attempt < 48; ++attempt, h *= 0.5) {
        if (!denominators_ok(x0, h)) continue;

        // decide whether the h-free density is usable for this instance; near
        // its singular set the residual is pure noise amplification
        bool flow_ok = std::abs(d1a) >= 1e-2 && std::abs(d1b) >= 1e-2;
        nambu::DensitySpec flow_dens{nambu::DensityKind::Flow, s, 0.0};
        if (flow_ok) {
            const double p = nambu::H(s, x0) - 0.5 *
                (2 * s.a[1] * s.a[3] * s.a[4] - s.a[2] * s.a[3] * s.a[3] - s.a[0] * s.a[4] * s.a[4]) / d1a;
            const double q = nambu::K(s, x0) - 0.5 *
                (2 * s.b[1] * s.b[3] * s.b[4] - s.b[2] * s.b[3] * s.b[3] - s.b[0] * s.b[4] * s.b[4]) / d1b;
            flow_ok = std::abs(p) >= 5e-2 && std::abs(q) >= 5e-2;
        }

        const nambu::DensitySpec step_dens{nambu::DensityKind::Timestep, s, h};
        InstanceOutcome attempt_out;
        attempt_out.flow_checked = flow_ok;
        const double h0_val = nambu::modified_H(s, x0, h);
        const double k0_val = nambu::modified_K(s, x0, h);

        if (flow_ok) {
            try {
                attempt_out.flow_div = nambu::flow_density_check(s, x0);
            } catch (const DivisionByZero&) {
                attempt_out.flow_checked = false;
            }
        }

        State x = x0;
        bool admissible = true;
        for (long m = 0; m < steps; ++m) {
            State next;
            try {
                next = kahan_step(field, x, h).state;
            } catch (const SingularStep&) {
                admissible = false;
                break;
            }
            if (max_norm(next) > 25.0 || !denominators_ok(next, h)) {
                admissible = false;
                break;
            }
            attempt_out.drift_h = std::max(
                attempt_out.drift_h,
                std::abs(nambu::modified_H(s, next, h) - h0_val) / (1.0 + std::abs(h0_val)));
            attempt_out.drift_k = std::max(
                attempt_out.drift_k,
                std::abs(nambu::modified_K(s, next, h) - k0_val) / (1.0 + std::abs(k0_val)));
            attempt_out.measure = std::max(
                attempt_out.measure, nambu::measure_residual(field, step_dens, x, next, h));
            if (attempt_out.flow_checked) {
                try {
                    attempt_out.flow_measure = std::max(
                        attempt_out.flow_measure,
                        nambu::measure_residual(field, flow_dens, x, next, h));
                } catch (const DivisionByZero&) {
                    attempt_out.flow_checked = false;
                    attempt_out.flow_measure = 0.0;
                }
            }
            x = std::move(next);
        }
        if (!admissible) continue;

        attempt_out.failed = attempt_out.drift_h > tolerance || attempt_out.drift_k > tolerance ||
                             attempt_out.measure > tolerance ||
                             (attempt_out.flow_checked &&
                              (attempt_out.flow_measure > tolerance ||
                               attempt_out.flow_div > tolerance));
        return attempt_out;
    }
    out.failed = true; // no admissible step size found within the retry budget
    return out;
}

} // namespace

FamilySweepResult verify_family(std::size_t count, std::uint64_t seed, long steps, double h_max,
                                double tolerance, unsigned jobs) {
    std::vector<InstanceOutcome> outcomes(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            outcomes[i] = run_family_instance(seed, i, steps, h_max, tolerance);
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    FamilySweepResult res;
    res.count = count;
    for (const InstanceOutcome& o : outcomes) {
        if (o.failed) ++res.failures;
        res.worst_drift_h = std::max(res.worst_drift_h, o.drift_h);
        res.worst_drift_k = std::max(res.worst_drift_k, o.drift_k);
        res.worst_measure = std::max(res.worst_measure, o.measure);
        res.worst_flow_measure = std::max(res.worst_flow_measure, o.flow_measure);
        res.worst_flow_divergence = std::max(res.worst_flow_divergence, o.flow_div);
        if (o.flow_checked) ++res.flow_density_checked;
    }
    return res;
}

} // namespace kahan::harness
