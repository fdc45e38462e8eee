// Copyright 2026 The mproj Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "mproj/cli/config.hpp"
#include "mproj/cli/registry.hpp"
#include "mproj/core/coefficients.hpp"
#include "mproj/core/density.hpp"
#include "mproj/core/ensemble.hpp"
#include "mproj/core/rng.hpp"
#include "mproj/diagnostics/diagnostics.hpp"
#include "mproj/io/csv.hpp"
#include "mproj/pide/pide.hpp"
#include "mproj/projection/estimator.hpp"
#include "mproj/projection/function_of_markov.hpp"
#include "mproj/projection/time_change.hpp"
#include "mproj/simulate/simulate.hpp"
#include "mproj/version.hpp"

namespace mproj::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitNumeric = 3,
    kExitTolerance = 4,
};

/// Result of one command: the deterministic report (written as
/// report.json) and whether every configured tolerance held.
struct CommandResult {
    nlohmann::json report;
    bool passed = true;
    std::vector<std::string> files;
};

struct Seeds {
    std::uint64_t master = 0;
    std::uint64_t source = 0;
    std::uint64_t resimulate = 0;
    std::uint64_t audit = 0;

    explicit Seeds(std::uint64_t m)
        : master(m), source(derive_seed(m, "source")), resimulate(derive_seed(m, "resimulate")),
          audit(derive_seed(m, "audit"))
    {
    }
};

namespace detail {

inline std::string out_file(const std::string& dir, const std::string& name)
{
    return (std::filesystem::path(dir) / name).string();
}

inline void write_json(const nlohmann::json& j, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    os << j.dump(2) << '\n';
    if (!os) throw NumericError("cannot write " + path);
}

/// Runs `f`, prefixing numeric failures with the stage name.
template <class F>
auto stage(const char* name, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const NumericError& e) {
        throw NumericError(std::string(name) + ": " + e.what());
    }
}

inline std::size_t step_of(const RunConfig& c, double t, const char* field)
{
    const double u = t / c.time.t_end * static_cast<double>(c.time.n_steps);
    const double r = std::round(u);
    if (std::abs(u - r) > 1e-9 * std::max(1.0, u))
        throw ConfigError(std::string("config: ") + field + ": t = " + std::to_string(t) +
                          " is not on the time grid (t_end / n_steps)");
    return static_cast<std::size_t>(r);
}

/// Default stride: the largest one that records every checkpoint.
inline std::size_t record_stride(const RunConfig& c, const std::vector<double>& checkpoints, const char* field)
{
    if (c.simulation.record_stride) {
        for (double t : checkpoints)
            if (step_of(c, t, field) % c.simulation.record_stride != 0 && step_of(c, t, field) != c.time.n_steps)
                throw ConfigError(std::string("config: ") + field + ": t = " + std::to_string(t) +
                                  " is not recorded with simulation.record_stride = " +
                                  std::to_string(c.simulation.record_stride));
        return c.simulation.record_stride;
    }
    std::size_t g = c.time.n_steps;
    for (double t : checkpoints) g = std::gcd(g, step_of(c, t, field));
    return std::max<std::size_t>(1, g);
}

inline std::vector<double> observed(const ModelBundle& b, const PathEnsemble& e, std::size_t r)
{
    std::vector<double> out(e.n_paths);
    for (std::size_t p = 0; p < e.n_paths; ++p) out[p] = b.observe(e.state(p, r));
    return out;
}

inline nlohmann::json moments_json(const numerics::Moments& m)
{
    return nlohmann::json::array({m[0], m[1], m[2], m[3]});
}

inline nlohmann::json header(const RunConfig& c, const std::string& command)
{
    return {{"schema_version", kConfigSchemaVersion},
            {"command", command},
            {"model", c.model.name},
            {"seed", c.seed},
            {"config_hash", fnv1a(c.text)}};
}

inline std::string method_of(const RunConfig& c, const ModelBundle& b)
{
    const std::string m = c.projection.method == "auto" ? b.default_method : c.projection.method;
    if (m == "closed-form" && !b.function_of_markov)
        throw ConfigError("config: projection.method: closed-form needs a function-of-Markov model (ou2-sum)");
    if (m == "time-change" && !b.time_change)
        throw ConfigError("config: projection.method: time-change needs the time-changed-levy model");
    if (m == "estimate" && b.model.dim != 1)
        throw ConfigError("config: projection.method: estimate needs a one-dimensional source model");
    return m;
}

inline bool needs_source(const std::string& method) { return method != "closed-form"; }

struct SourceRun {
    PathEnsemble ensemble;
    std::size_t stride = 1;
};

inline SourceRun simulate_source(const ModelBundle& b, const RunConfig& c, const Seeds& s,
                                 const std::vector<double>& checkpoints, const char* field, bool characteristics)
{
    SourceRun run;
    run.stride = record_stride(c, checkpoints, field);
    SimulationOptions so;
    so.record_stride = run.stride;
    so.record_characteristics = characteristics;
    so.record_aux = b.model.aux_dim > 0 && b.time_change.has_value();
    so.threads = c.threads;
    run.ensemble = stage("simulate", [&] {
        return simulate_ito(b.model, TimeGrid(0.0, c.time.t_end, c.time.n_steps), c.simulation.n_paths, s.source, so);
    });
    return run;
}

inline std::vector<double> linspace(double a, double b, std::size_t n)
{
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

/// Projected coefficients by the configured method; `info` collects the
/// estimation diagnostics.
inline ProjectedCoefficients project(const ModelBundle& b, const RunConfig& c, const PathEnsemble* source,
                                     nlohmann::json& info)
{
    const std::string method = method_of(c, b);
    const auto& pc = c.projection;
    const bool jumps = b.model.has_jumps() || (b.function_of_markov && b.function_of_markov->levy);
    if (jumps && pc.y_grid.empty()) throw ConfigError("config: projection.y_grid: required for models with jumps");
    info = {{"method", method}};
    if (method == "estimate") {
        EstimatorOptions eo;
        eo.z_grid = pc.z_grid;
        if (jumps) eo.y_grid = pc.y_grid;
        eo.mode = pc.estimator == "histogram" ? EstimatorMode::histogram : EstimatorMode::kernel;
        eo.bandwidth = pc.bandwidth;
        eo.min_effective = pc.min_effective;
        eo.jump_cutoff = pc.jump_cutoff;
        eo.small_mode = pc.small_jumps;
        eo.threads = c.threads;
        EstimationReport rep;
        auto co = stage("project", [&] { return estimate_projected_coefficients(*source, eo, &rep); });
        if (jumps) {
            const auto* pd = std::get_if<PoissonDriven>(&b.model.jumps);
            const bool known = pd && !pd->amplitude && !pd->rate_scale && pd->levy.dimension() == 1 &&
                               pd->levy.is_finite_activity() && pc.jump_cutoff == 0.0;
            if (pc.jump_kernel == "compensator" && !known)
                throw ConfigError("config: projection.jump_kernel: compensator needs state-independent finite-activity jumps");
            const bool use = known && pc.jump_kernel != "marks";
            if (use) set_levy_kernel(co, pd->levy);
            info["jump_kernel"] = use ? "compensator" : "marks";
        }
        info["bandwidths"] = rep.bandwidths;
        info["filled_cells"] = rep.filled_cells;
        info["empty_steps"] = rep.empty_steps;
        info["warnings"] = rep.warnings;
        return co;
    }
    if (method == "time-change") {
        TimeChangeProjectionOptions to;
        to.z_grid = pc.z_grid;
        to.y_grid = b.time_change->levy ? pc.y_grid : UniformGrid{};
        to.bandwidth = pc.bandwidth;
        to.min_effective = pc.min_effective;
        to.mode = pc.estimator == "histogram" ? EstimatorMode::histogram : EstimatorMode::kernel;
        std::vector<double> alpha;
        auto co = stage("project", [&] { return project_time_changed_levy(*b.time_change, *source, to, &alpha); });
        info["alpha"] = alpha;
        return co;
    }
    FunctionOfMarkovOptions fo;
    const std::size_t n = pc.n_times;
    fo.times = linspace(0.0, c.time.t_end, n);
    // a point-mass start has no density at t = 0; the first coefficients are taken half a step later
    if (b.model.initial.is_point_mass()) fo.times[0] = 0.5 * fo.times[1];
    fo.w_grid = pc.z_grid;
    if (jumps) fo.y_grid = pc.y_grid;
    return stage("project", [&] { return project_function_of_markov(*b.function_of_markov, fo); });
}

inline PideOptions pide_options(const RunConfig& c, const std::vector<double>& checkpoints)
{
    PideOptions po;
    po.x_grid = c.pide.x_grid;
    po.time = TimeGrid(0.0, c.time.t_end, c.pide.n_steps);
    po.scheme = c.pide.scheme == "explicit" ? PideScheme::explicit_euler : PideScheme::imex;
    po.cfl_limit = c.pide.cfl_limit;
    po.mass_tolerance = c.pide.mass_tolerance;
    po.generator.allow_degenerate = c.pide.allow_degenerate;
    po.checkpoints = checkpoints;
    return po;
}

inline nlohmann::json pide_json(const PideDiagnostics& d)
{
    return {{"times", d.times},
            {"mass", d.mass},
            {"min_density", d.min_density},
            {"lost_mass", d.lost_mass},
            {"max_mass_drift", d.max_mass_drift},
            {"max_lambda_dt", d.max_lambda_dt},
            {"negative_steps", d.negative_steps}};
}

inline nlohmann::json pide_summary(const PideDiagnostics& d)
{
    return {{"max_mass_drift", d.max_mass_drift},
            {"max_lambda_dt", d.max_lambda_dt},
            {"negative_steps", d.negative_steps},
            {"min_density", *std::min_element(d.min_density.begin(), d.min_density.end())},
            {"lost_mass", d.lost_mass.back()}};
}

inline void write_route_csv(const MimicReport& r, const std::string& path)
{
    io::CsvWriter w(path, {"t", "ks", "w1", "m1", "m2", "m3", "m4"});
    for (const auto& e : r.entries)
        w.row({e.t, e.ks, e.w1, e.moments_reference[0], e.moments_reference[1], e.moments_reference[2],
               e.moments_reference[3]});
    w.close();
}

inline void write_summary_csv(const ModelBundle& b, const PathEnsemble& e, const std::string& path, nlohmann::json& out)
{
    io::CsvWriter w(path, {"t", "mean", "variance", "m1", "m2", "m3", "m4"});
    out = nlohmann::json::array();
    for (std::size_t r = 0; r < e.n_recorded(); ++r) {
        const auto x = observed(b, e, r);
        const auto s = numerics::mean_stats(x);
        const auto m = numerics::raw_moments(x);
        w.row({e.time(r), s.mean, s.variance, m[0], m[1], m[2], m[3]});
        out.push_back({{"t", e.time(r)}, {"mean", s.mean}, {"variance", s.variance}, {"moments", moments_json(m)}});
    }
    w.close();
}

} // namespace detail

/// simulate: source ensemble, per-record summary of xi.
inline CommandResult run_simulate(const RunConfig& c, const std::string& out)
{
    const auto b = build_model(c.model);
    const Seeds s(c.seed);
    auto run = detail::simulate_source(b, c, s, c.simulation.checkpoints, "simulation.checkpoints", false);
    CommandResult r;
    r.report = detail::header(c, "simulate");
    r.report["n_paths"] = c.simulation.n_paths;
    r.report["record_stride"] = run.stride;
    nlohmann::json summary;
    detail::write_summary_csv(b, run.ensemble, detail::out_file(out, "summary.csv"), summary);
    r.files.push_back("summary.csv");
    r.report["summary"] = std::move(summary);
    if (c.simulation.write_ensemble) {
        write_ensemble(run.ensemble, detail::out_file(out, "ensemble.bin"));
        r.files.push_back("ensemble.bin");
    }
    return r;
}

/// project: coefficients on the configured grids.
inline CommandResult run_project(const RunConfig& c, const std::string& out)
{
    const auto b = build_model(c.model);
    const Seeds s(c.seed);
    const std::string method = detail::method_of(c, b);
    std::optional<detail::SourceRun> run;
    if (detail::needs_source(method))
        run = detail::simulate_source(b, c, s, {}, "simulation.record_stride", method == "estimate");
    nlohmann::json info;
    const auto co = detail::project(b, c, run ? &run->ensemble : nullptr, info);
    write_coefficients(co, out);
    CommandResult r;
    r.files = {"coefficients.csv", "tails.csv", "coefficients.json"};
    if (co.has_jumps()) r.files.push_back("kernel.csv");
    r.report = detail::header(c, "project");
    r.report["projection"] = std::move(info);
    r.report["times"] = co.times;
    return r;
}

/// pide: projection followed by the forward equation.
inline CommandResult run_pide(const RunConfig& c, const std::string& out)
{
    const auto b = build_model(c.model);
    const Seeds s(c.seed);
    const std::string method = detail::method_of(c, b);
    std::optional<detail::SourceRun> run;
    if (detail::needs_source(method))
        run = detail::simulate_source(b, c, s, {}, "simulation.record_stride", method == "estimate");
    nlohmann::json info;
    const auto co = detail::project(b, c, run ? &run->ensemble : nullptr, info);
    PideDiagnostics diag;
    const auto po = detail::pide_options(c, c.mimic.checkpoints);
    const auto d = detail::stage("pide", [&] { return evolve_forward(b.initial_density(po.x_grid), co, po, &diag); });
    write_density(d, out);
    detail::write_json(detail::pide_json(diag), detail::out_file(out, "pide_diagnostics.json"));
    CommandResult r;
    r.files = {"density.csv", "density.json", "pide_diagnostics.json"};
    r.report = detail::header(c, "pide");
    r.report["projection"] = std::move(info);
    r.report["pide"] = detail::pide_summary(diag);
    nlohmann::json exact = nlohmann::json::array();
    for (std::size_t k = 0; k < d.nt(); ++k) {
        const auto law = b.exact(d.times[k]);
        if (!law) continue;
        const double l1 = l1_distance(d, k, [&](double x) { return numerics::normal_pdf(x, law->mean, law->sd); });
        exact.push_back({{"t", d.times[k]}, {"l1", l1}});
        r.passed = r.passed && l1 <= c.mimic.l1_tolerance;
    }
    r.report["exact"] = std::move(exact);
    r.report["passed"] = r.passed;
    return r;
}

/// mimic: source, projection and the verification routes, compared at the
/// checkpoints.
inline CommandResult run_mimic(const RunConfig& c, const std::string& out)
{
    const auto b = build_model(c.model);
    const Seeds s(c.seed);
    const auto& mc = c.mimic;
    if (mc.checkpoints.empty()) throw ConfigError("config: mimic.checkpoints: needs at least one time");
    const std::string method = detail::method_of(c, b);
    auto run = detail::simulate_source(b, c, s, mc.checkpoints, "mimic.checkpoints", method == "estimate");
    const auto& src = run.ensemble;

    CommandResult r;
    r.report = detail::header(c, "mimic");
    r.report["schema_version"] = kMimicSchemaVersion;
    nlohmann::json info;
    const auto co = detail::project(b, c, &src, info);
    write_coefficients(co, out);
    r.files = {"coefficients.csv", "tails.csv", "coefficients.json"};
    if (co.has_jumps()) r.files.push_back("kernel.csv");
    r.report["projection"] = std::move(info);

    const bool do_pide = mc.route != "resimulate";
    const bool do_resim = mc.route != "pide";
    std::vector<std::vector<double>> source_x;
    for (double t : mc.checkpoints) source_x.push_back(detail::observed(b, src, src.nearest_record(t)));

    nlohmann::json routes = nlohmann::json::object();
    std::optional<DensityField> density;
    if (do_pide) {
        PideDiagnostics diag;
        const auto po = detail::pide_options(c, mc.checkpoints);
        density = detail::stage("pide", [&] { return evolve_forward(b.initial_density(po.x_grid), co, po, &diag); });
        write_density(*density, out);
        detail::write_json(detail::pide_json(diag), detail::out_file(out, "pide_diagnostics.json"));
        r.files.insert(r.files.end(), {"density.csv", "density.json", "pide_diagnostics.json"});
        MimicReport rep;
        rep.route = "pide";
        rep.ks_tolerance = mc.ks_tolerance;
        for (std::size_t q = 0; q < mc.checkpoints.size(); ++q) {
            auto e = compare_marginals(source_x[q], *density, density->nearest_time(mc.checkpoints[q]));
            e.t = mc.checkpoints[q];
            rep.entries.push_back(e);
        }
        detail::write_route_csv(rep, detail::out_file(out, "report_pide.csv"));
        r.files.push_back("report_pide.csv");
        routes["pide"] = to_json(rep);
        routes["pide"]["solver"] = detail::pide_summary(diag);
        r.passed = r.passed && rep.passed();
    }
    std::optional<PathEnsemble> resim;
    if (do_resim) {
        ProjectedSimulationOptions so;
        so.record_stride = run.stride;
        so.threads = c.threads;
        ProjectedSimulationStats stats;
        const std::size_t n = mc.n_paths ? mc.n_paths : c.simulation.n_paths;
        resim = detail::stage("resimulate", [&] {
            return simulate_projected(co, b.xi_initial, TimeGrid(0.0, c.time.t_end, c.time.n_steps), n, s.resimulate,
                                      so, &stats);
        });
        MimicReport rep;
        rep.route = "resimulate";
        rep.ks_tolerance = mc.ks_tolerance;
        for (std::size_t q = 0; q < mc.checkpoints.size(); ++q)
            rep.entries.push_back(
                compare_marginals(source_x[q], resim->marginal(resim->nearest_record(mc.checkpoints[q])),
                                  mc.checkpoints[q]));
        detail::write_route_csv(rep, detail::out_file(out, "report_resimulate.csv"));
        r.files.push_back("report_resimulate.csv");
        routes["resimulate"] = to_json(rep);
        routes["resimulate"]["simulation"] = {{"n_paths", n},
                                              {"edge_excursions", stats.edge_excursions},
                                              {"tail_jumps", stats.tail_jumps},
                                              {"max_lambda_dt", stats.max_lambda_dt},
                                              {"warnings", stats.warnings}};
        r.passed = r.passed && rep.passed();
    }
    r.report["routes"] = std::move(routes);

    if (density && resim) {
        nlohmann::json agree = {{"tolerance", std::isfinite(mc.route_agreement) ? nlohmann::json(mc.route_agreement)
                                                                                 : nlohmann::json(nullptr)}};
        double worst = 0.0;
        nlohmann::json entries = nlohmann::json::array();
        for (double t : mc.checkpoints) {
            const auto e = compare_marginals(resim->marginal(resim->nearest_record(t)), *density, density->nearest_time(t));
            worst = std::max(worst, e.ks);
            entries.push_back({{"t", t}, {"ks", e.ks}, {"w1", e.w1}});
        }
        agree["max_ks"] = worst;
        agree["entries"] = std::move(entries);
        agree["passed"] = worst <= mc.route_agreement;
        r.passed = r.passed && worst <= mc.route_agreement;
        r.report["route_agreement"] = std::move(agree);
    }

    if (density) {
        nlohmann::json exact = nlohmann::json::array();
        for (double t : mc.checkpoints) {
            const auto law = b.exact(t);
            if (!law) continue;
            const std::size_t k = density->nearest_time(t);
            const double l1 =
                l1_distance(*density, k, [&](double x) { return numerics::normal_pdf(x, law->mean, law->sd); });
            exact.push_back({{"t", t}, {"mean", law->mean}, {"sd", law->sd}, {"l1", l1}});
            r.passed = r.passed && l1 <= mc.l1_tolerance;
        }
        if (!exact.empty()) r.report["exact"] = std::move(exact);
    }

    if (mc.martingale) {
        nlohmann::json m;
        const auto ms = check_martingale_preservation(src, mc.checkpoints);
        m["source"] = to_json(ms);
        bool ok = ms.passed();
        if (resim) {
            const auto mr = check_martingale_preservation(*resim, mc.checkpoints);
            m["resimulate"] = to_json(mr);
            ok = ok && mr.passed();
        }
        m["passed"] = ok;
        r.passed = r.passed && ok;
        r.report["martingale"] = std::move(m);
    }
    r.report["passed"] = r.passed;
    return r;
}

/// audit: assumption checks on the model (along a short ensemble) or on
/// its projected coefficients. Always completes; failures are reported.
inline CommandResult run_audit(const RunConfig& c, const std::string& out)
{
    const auto b = build_model(c.model);
    const Seeds s(c.seed);
    AssumptionAuditConfig ac;
    ac.k1 = c.audit.k1;
    ac.k2 = c.audit.k2;
    ac.k3 = c.audit.k3;
    ac.ellipticity = c.audit.ellipticity;
    ac.tail_radii = c.audit.tail_radii;
    ac.tail_tolerance = c.audit.tail_tolerance;
    ac.lipschitz_bound = c.audit.lipschitz_bound;
    AuditReport rep;
    if (c.audit.target == "model") {
        SimulationOptions so;
        so.record_stride = std::max<std::size_t>(1, c.time.n_steps / 20);
        so.threads = c.threads;
        const auto e = detail::stage("simulate", [&] {
            return simulate_ito(b.model, TimeGrid(0.0, c.time.t_end, c.time.n_steps), c.audit.n_paths, s.audit, so);
        });
        rep = audit_assumptions(b.model, e, ac);
    } else {
        const std::string method = detail::method_of(c, b);
        std::optional<detail::SourceRun> run;
        if (detail::needs_source(method))
            run = detail::simulate_source(b, c, s, {}, "simulation.record_stride", method == "estimate");
        nlohmann::json info;
        const auto co = detail::project(b, c, run ? &run->ensemble : nullptr, info);
        if (const auto* pd = std::get_if<PoissonDriven>(&b.model.jumps))
            if (const auto* st = pd->levy.stable_tail()) ac.declared_stable = *st;
        rep = audit_assumptions(co, ac);
    }
    const auto j = to_json(rep);
    detail::write_json(j, detail::out_file(out, "audit.json"));
    CommandResult r;
    r.files = {"audit.json"};
    r.report = detail::header(c, "audit");
    r.report["audit"] = j;
    return r;
}

/// Dispatch by command name, write report.json and manifest.json.
inline CommandResult run_command(const std::string& command, const RunConfig& c, const std::string& out)
{
    std::filesystem::create_directories(out);
    const auto start = std::chrono::steady_clock::now();
    CommandResult r;
    if (command == "simulate") r = run_simulate(c, out);
    else if (command == "project") r = run_project(c, out);
    else if (command == "pide") r = run_pide(c, out);
    else if (command == "mimic") r = run_mimic(c, out);
    else if (command == "audit") r = run_audit(c, out);
    else throw ConfigError("unknown command " + command);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    detail::write_json(r.report, detail::out_file(out, "report.json"));
    r.files.push_back("report.json");
    const Seeds s(c.seed);
    nlohmann::json manifest = {
        {"command", command},
        {"config_hash", fnv1a(c.text)},
        {"versions", {{"mproj", kVersion}, {"config_schema", kConfigSchemaVersion}, {"mimic_schema", kMimicSchemaVersion},
                      {"audit_schema", kAuditSchemaVersion}, {"compiler", __VERSION__}}},
        {"seeds", {{"master", s.master}, {"source", s.source}, {"resimulate", s.resimulate}, {"audit", s.audit}}},
        {"threads", c.threads},
        {"wall_time_seconds", wall},
        {"outputs", r.files},
        {"passed", r.passed},
    };
    detail::write_json(manifest, detail::out_file(out, "manifest.json"));
    return r;
}

} // namespace mproj::cli
