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

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "mproj/core/error.hpp"
#include "mproj/core/grid.hpp"
#include "mproj/core/levy.hpp"
#include "mproj/numerics/statistics.hpp"

namespace mproj::cli {

inline constexpr int kConfigSchemaVersion = 1;

/// Read-only view of one JSON value that remembers its path, so every
/// schema error names the offending field.
class Node {
public:
    Node(const nlohmann::json& j, std::string path) : j_(&j), path_(std::move(path)) {}

    const std::string& path() const { return path_; }
    const nlohmann::json& raw() const { return *j_; }

    [[noreturn]] void fail(const std::string& what) const
    {
        throw ConfigError("config: " + (path_.empty() ? std::string("<root>") : path_) + ": " + what);
    }

    bool has(const std::string& key) const { return j_->is_object() && j_->contains(key) && !(*j_)[key].is_null(); }

    Node at(const std::string& key) const
    {
        if (!j_->is_object()) fail("expected an object");
        if (!j_->contains(key)) Node(*j_, sub(key)).fail("missing required field");
        return Node((*j_)[key], sub(key));
    }

    Node at(std::size_t i) const { return Node((*j_)[i], path_ + "[" + std::to_string(i) + "]"); }
    std::size_t size() const { return j_->size(); }

    /// Rejects keys outside `allowed`.
    void only(std::initializer_list<const char*> allowed) const
    {
        if (!j_->is_object()) fail("expected an object");
        for (const auto& [k, v] : j_->items()) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || k == a;
            if (!ok) Node(v, sub(k)).fail("unknown field");
        }
    }

    double number() const
    {
        if (!j_->is_number()) fail("expected a number");
        return j_->get<double>();
    }
    double number(const std::string& key) const { return at(key).number(); }
    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::uint64_t u64() const
    {
        if (!j_->is_number_unsigned() && !(j_->is_number_integer() && j_->get<std::int64_t>() >= 0))
            fail("expected a nonnegative integer");
        return j_->get<std::uint64_t>();
    }
    std::uint64_t u64(const std::string& key, std::uint64_t fallback) const { return has(key) ? at(key).u64() : fallback; }

    std::size_t count(const std::string& key) const
    {
        const auto v = at(key).u64();
        if (v == 0) at(key).fail("must be positive");
        return static_cast<std::size_t>(v);
    }
    std::size_t count(const std::string& key, std::size_t fallback) const { return has(key) ? count(key) : fallback; }

    bool flag(const std::string& key, bool fallback) const
    {
        if (!has(key)) return fallback;
        const Node n = at(key);
        if (!n.j_->is_boolean()) n.fail("expected true or false");
        return n.j_->get<bool>();
    }

    std::string text(const std::string& key) const
    {
        const Node n = at(key);
        if (!n.j_->is_string()) n.fail("expected a string");
        return n.j_->get<std::string>();
    }
    std::string text(const std::string& key, const std::string& fallback) const { return has(key) ? text(key) : fallback; }

    std::string choice(const std::string& key, const std::string& fallback, std::initializer_list<const char*> options) const
    {
        const std::string v = text(key, fallback);
        for (const char* o : options)
            if (v == o) return v;
        std::string list;
        for (const char* o : options) list += (list.empty() ? "" : ", ") + std::string(o);
        at(key).fail("must be one of " + list + " (got \"" + v + "\")");
    }

    std::vector<double> numbers(const std::string& key) const
    {
        const Node n = at(key);
        if (!n.j_->is_array()) n.fail("expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < n.size(); ++i) out.push_back(n.at(i).number());
        return out;
    }
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const
    {
        return has(key) ? numbers(key) : fallback;
    }

    double positive(const std::string& key, double fallback) const
    {
        const double v = number(key, fallback);
        if (!(v > 0.0) || !std::isfinite(v)) at(key).fail("must be a finite positive number");
        return v;
    }

    /// {lo, hi, n} or {lo, hi, step}.
    UniformGrid grid(const std::string& key) const
    {
        const Node g = at(key);
        g.only({"lo", "hi", "n", "step"});
        const double lo = g.number("lo"), hi = g.number("hi");
        if (!(hi > lo)) g.fail("hi must exceed lo");
        try {
            if (g.has("step")) {
                if (g.has("n")) g.fail("give either n or step, not both");
                return UniformGrid::from_step(lo, hi, g.positive("step", 1.0));
            }
            const auto n = g.count("n");
            if (n < 2) g.at("n").fail("needs at least 2 nodes");
            return UniformGrid::from_range(lo, hi, n);
        } catch (const ConfigError& e) {
            if (std::string(e.what()).rfind("config:", 0) == 0) throw;
            g.fail(e.what());
        }
    }

private:
    std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const nlohmann::json* j_;
    std::string path_;
};

/// Jump measure from a config block:
///   {"intensity": l, "law": "atoms", "sizes": [...], "probs": [...]}
///   {"intensity": l, "law": "laplace", "scale": s}
///   {"intensity": l, "law": "normal", "mean": m, "sd": s}
///   {"law": "stable", "c": c, "exponent": b, "cutoff": e}
inline LevyDensitySpec parse_levy(const Node& n)
{
    const std::string law = n.choice("law", "atoms", {"atoms", "laplace", "normal", "stable"});
    LevyDensitySpec spec;
    try {
        if (law == "stable") {
            n.only({"law", "c", "exponent", "cutoff", "small_jumps"});
            StableTail s;
            s.c = n.number("c");
            s.exponent = n.number("exponent");
            s.cutoff = n.number("cutoff", 0.05);
            s.mode = n.choice("small_jumps", "gaussian", {"gaussian", "drop"}) == "gaussian" ? SmallJumpMode::gaussian
                                                                                             : SmallJumpMode::drop;
            spec = LevyDensitySpec(s);
        } else {
            const double intensity = n.number("intensity");
            if (law == "atoms") {
                n.only({"law", "intensity", "sizes", "probs"});
                const auto sizes = n.numbers("sizes");
                const auto probs = n.numbers("probs", std::vector<double>(sizes.size(), 1.0 / static_cast<double>(
                                                                                             std::max<std::size_t>(1, sizes.size()))));
                if (sizes.empty()) n.at("sizes").fail("needs at least one jump size");
                if (probs.size() != sizes.size()) n.at("probs").fail("must have one entry per size");
                std::vector<JumpAtom> atoms;
                for (std::size_t i = 0; i < sizes.size(); ++i) atoms.push_back({{sizes[i]}, probs[i]});
                spec = LevyDensitySpec::compound_poisson(intensity, JumpLaw::atoms(std::move(atoms)));
            } else if (law == "laplace") {
                n.only({"law", "intensity", "scale"});
                const double s = n.positive("scale", 1.0);
                spec = LevyDensitySpec::compound_poisson(
                    intensity, JumpLaw::density([s](double y) { return std::exp(-std::abs(y) / s) / (2.0 * s); },
                                                -std::numeric_limits<double>::infinity(),
                                                std::numeric_limits<double>::infinity()));
            } else {
                n.only({"law", "intensity", "mean", "sd"});
                const double m = n.number("mean", 0.0), sd = n.positive("sd", 1.0);
                spec = LevyDensitySpec::compound_poisson(
                    intensity, JumpLaw::density([m, sd](double y) { return numerics::normal_pdf(y, m, sd); },
                                                -std::numeric_limits<double>::infinity(),
                                                std::numeric_limits<double>::infinity()));
            }
        }
        spec.validate();
    } catch (const ConfigError& e) {
        if (std::string(e.what()).rfind("config:", 0) == 0) throw;
        n.fail(e.what());
    }
    return spec;
}

struct ModelConfig {
    std::string name;
    nlohmann::json params = nlohmann::json::object();
    double x0 = 0.0;
};

struct TimeConfig {
    double t_end = 1.0;
    std::size_t n_steps = 100;
};

struct SimulationConfig {
    std::size_t n_paths = 10000;
    std::size_t record_stride = 0;  // 0: only the first and last step
    std::vector<double> checkpoints;
    bool write_ensemble = true;
};

struct ProjectionConfig {
    std::string method = "auto";  // auto | estimate | closed-form | time-change
    UniformGrid z_grid = UniformGrid::from_range(-3.0, 3.0, 61);
    UniformGrid y_grid;
    std::string estimator = "kernel";
    std::optional<double> bandwidth;
    std::size_t min_effective = 50;
    double jump_cutoff = 0.0;
    SmallJumpMode small_jumps = SmallJumpMode::drop;
    std::string jump_kernel = "auto";  // auto | marks | compensator
    std::size_t n_times = 21;  // closed-form projections: coefficient times on [0, t_end]
};

struct PideConfig {
    UniformGrid x_grid = UniformGrid::from_step(-5.0, 5.0, 0.01);
    std::size_t n_steps = 1000;
    std::string scheme = "imex";
    bool allow_degenerate = false;
    double cfl_limit = 0.9;
    double mass_tolerance = 1e-3;
};

struct MimicConfig {
    std::string route = "both";  // pide | resimulate | both
    std::vector<double> checkpoints{0.25, 0.5, 1.0};
    std::size_t n_paths = 0;  // resimulation paths; 0: simulation.n_paths
    double ks_tolerance = std::numeric_limits<double>::infinity();
    double route_agreement = std::numeric_limits<double>::infinity();
    double l1_tolerance = std::numeric_limits<double>::infinity();  // PIDE vs exact law, when known
    bool martingale = false;
};

struct AuditConfig {
    double k1 = std::numeric_limits<double>::infinity();
    double k2 = std::numeric_limits<double>::infinity();
    double k3 = std::numeric_limits<double>::infinity();
    double ellipticity = 1e-8;
    std::vector<double> tail_radii{1.0, 2.0, 4.0, 8.0};
    double tail_tolerance = 1e-2;
    double lipschitz_bound = std::numeric_limits<double>::infinity();
    std::size_t n_paths = 256;
    std::string target = "model";  // model | coefficients
};

struct RunConfig {
    std::uint64_t seed = 0;
    unsigned threads = 1;
    ModelConfig model;
    TimeConfig time;
    SimulationConfig simulation;
    ProjectionConfig projection;
    PideConfig pide;
    MimicConfig mimic;
    AuditConfig audit;
    std::string text;  // the config file as read, for hashing
};

inline double bound_or_inf(const Node& n, const std::string& key)
{
    if (!n.has(key)) return std::numeric_limits<double>::infinity();
    const double v = n.number(key);
    if (!(v >= 0.0)) n.at(key).fail("must be >= 0");
    return v;
}

inline RunConfig parse_config(const nlohmann::json& j)
{
    const Node root(j, "");
    root.only({"schema_version", "seed", "threads", "model", "time", "simulation", "projection", "pide", "mimic",
               "audit", "description"});
    const auto version = root.at("schema_version").u64();
    if (version != kConfigSchemaVersion)
        root.at("schema_version").fail("unsupported version " + std::to_string(version) + " (expected " +
                                       std::to_string(kConfigSchemaVersion) + ")");
    RunConfig c;
    c.seed = root.u64("seed", 0);
    c.threads = static_cast<unsigned>(root.count("threads", 1));

    const Node m = root.at("model");
    m.only({"name", "params", "x0"});
    c.model.name = m.text("name");
    if (m.has("params")) {
        if (!m.at("params").raw().is_object()) m.at("params").fail("expected an object");
        c.model.params = m.at("params").raw();
    }
    c.model.x0 = m.number("x0", 0.0);

    const Node t = root.at("time");
    t.only({"t_end", "n_steps"});
    c.time.t_end = t.positive("t_end", 1.0);
    c.time.n_steps = t.count("n_steps", 100);

    if (root.has("simulation")) {
        const Node s = root.at("simulation");
        s.only({"n_paths", "record_stride", "checkpoints", "write_ensemble"});
        c.simulation.n_paths = s.count("n_paths", c.simulation.n_paths);
        c.simulation.record_stride = s.count("record_stride", 0);
        c.simulation.checkpoints = s.numbers("checkpoints", {});
        c.simulation.write_ensemble = s.flag("write_ensemble", true);
    }
    if (root.has("projection")) {
        const Node p = root.at("projection");
        p.only({"method", "z_grid", "y_grid", "estimator", "bandwidth", "min_effective", "jump_cutoff", "small_jumps",
                "jump_kernel", "n_times"});
        c.projection.method = p.choice("method", "auto", {"auto", "estimate", "closed-form", "time-change"});
        if (p.has("z_grid")) c.projection.z_grid = p.grid("z_grid");
        if (p.has("y_grid")) c.projection.y_grid = p.grid("y_grid");
        c.projection.estimator = p.choice("estimator", "kernel", {"kernel", "histogram"});
        if (p.has("bandwidth")) c.projection.bandwidth = p.positive("bandwidth", 1.0);
        c.projection.min_effective = static_cast<std::size_t>(p.u64("min_effective", 50));
        c.projection.jump_cutoff = p.number("jump_cutoff", 0.0);
        if (!(c.projection.jump_cutoff >= 0.0)) p.at("jump_cutoff").fail("must be >= 0");
        c.projection.small_jumps =
            p.choice("small_jumps", "drop", {"drop", "gaussian"}) == "gaussian" ? SmallJumpMode::gaussian : SmallJumpMode::drop;
        c.projection.jump_kernel = p.choice("jump_kernel", "auto", {"auto", "marks", "compensator"});
        c.projection.n_times = p.count("n_times", 21);
        if (c.projection.n_times < 2) p.at("n_times").fail("needs at least 2 times");
    }
    if (root.has("pide")) {
        const Node p = root.at("pide");
        p.only({"x_grid", "n_steps", "scheme", "allow_degenerate", "cfl_limit", "mass_tolerance"});
        if (p.has("x_grid")) c.pide.x_grid = p.grid("x_grid");
        c.pide.n_steps = p.count("n_steps", c.pide.n_steps);
        c.pide.scheme = p.choice("scheme", "imex", {"imex", "explicit"});
        c.pide.allow_degenerate = p.flag("allow_degenerate", false);
        c.pide.cfl_limit = p.positive("cfl_limit", 0.9);
        c.pide.mass_tolerance = p.positive("mass_tolerance", 1e-3);
    }
    if (root.has("mimic")) {
        const Node p = root.at("mimic");
        p.only({"route", "checkpoints", "n_paths", "tolerances", "martingale"});
        c.mimic.route = p.choice("route", "both", {"pide", "resimulate", "both"});
        c.mimic.checkpoints = p.numbers("checkpoints", c.mimic.checkpoints);
        c.mimic.n_paths = static_cast<std::size_t>(p.u64("n_paths", 0));
        c.mimic.martingale = p.flag("martingale", false);
        if (p.has("tolerances")) {
            const Node tol = p.at("tolerances");
            tol.only({"ks", "route_agreement", "l1"});
            c.mimic.ks_tolerance = bound_or_inf(tol, "ks");
            c.mimic.route_agreement = bound_or_inf(tol, "route_agreement");
            c.mimic.l1_tolerance = bound_or_inf(tol, "l1");
        }
    }
    for (double v : c.mimic.checkpoints)
        if (!(v >= 0.0 && v <= c.time.t_end)) root.at("mimic").fail("checkpoints must lie in [0, time.t_end]");
    for (double v : c.simulation.checkpoints)
        if (!(v >= 0.0 && v <= c.time.t_end)) root.at("simulation").fail("checkpoints must lie in [0, time.t_end]");
    if (root.has("audit")) {
        const Node a = root.at("audit");
        a.only({"K1", "K2", "K3", "ellipticity", "tail_radii", "tail_tolerance", "lipschitz_bound", "n_paths", "target"});
        c.audit.k1 = bound_or_inf(a, "K1");
        c.audit.k2 = bound_or_inf(a, "K2");
        c.audit.k3 = bound_or_inf(a, "K3");
        c.audit.ellipticity = a.number("ellipticity", c.audit.ellipticity);
        c.audit.tail_radii = a.numbers("tail_radii", c.audit.tail_radii);
        c.audit.tail_tolerance = a.positive("tail_tolerance", c.audit.tail_tolerance);
        c.audit.lipschitz_bound = bound_or_inf(a, "lipschitz_bound");
        c.audit.n_paths = a.count("n_paths", c.audit.n_paths);
        c.audit.target = a.choice("target", "model", {"model", "coefficients"});
    }
    return c;
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    auto c = parse_config(j);
    c.text = ss.str();
    return c;
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace mproj::cli
