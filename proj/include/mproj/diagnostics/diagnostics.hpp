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
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mproj/core/coefficients.hpp"
#include "mproj/core/density.hpp"
#include "mproj/core/ensemble.hpp"
#include "mproj/core/error.hpp"
#include "mproj/core/model.hpp"
#include "mproj/numerics/quadrature.hpp"
#include "mproj/numerics/statistics.hpp"

namespace mproj {

inline constexpr int kMimicSchemaVersion = 1;
inline constexpr int kAuditSchemaVersion = 1;

/// Distance between one marginal of the source and its reference at time t.
struct MimicEntry {
    double t = 0.0;
    std::string reference;  // "sample", "density" or "cdf"
    double ks = 0.0;
    double w1 = 0.0;
    numerics::Moments moments_sample{};
    numerics::Moments moments_reference{};
    std::size_t n_sample = 0;
    std::size_t n_reference = 0;  // 0 for non-sample references
};

namespace detail {

inline void require_sample(std::span<const double> xs, const char* what)
{
    require(xs.size() >= 100, std::string("compare_marginals: ") + what + " needs at least 100 points");
    for (double x : xs)
        if (std::isnan(x)) throw NumericError(std::string("compare_marginals: NaN in ") + what);
}

} // namespace detail

/// Two-sample comparison. Symmetric: swapping the arguments swaps the
/// moment columns and leaves KS and W1 unchanged.
inline MimicEntry compare_marginals(std::span<const double> sample, std::span<const double> reference, double t)
{
    detail::require_sample(sample, "sample");
    detail::require_sample(reference, "reference");
    MimicEntry e;
    e.t = t;
    e.reference = "sample";
    e.ks = numerics::ks_two_sample(sample, reference);
    e.w1 = numerics::w1_two_sample(sample, reference);
    e.moments_sample = numerics::raw_moments(sample);
    e.moments_reference = numerics::raw_moments(reference);
    e.n_sample = sample.size();
    e.n_reference = reference.size();
    return e;
}

/// Sample against row k of a density field: CDF and quantile from the
/// normalised cumulative trapezoid.
inline MimicEntry compare_marginals(std::span<const double> sample, const DensityField& density, std::size_t k)
{
    detail::require_sample(sample, "sample");
    detail::require(k < density.nt(), "compare_marginals: density row out of range");
    const auto c = density.cumulative(k);
    const auto& g = density.x_grid;
    MimicEntry e;
    e.t = density.times[k];
    e.reference = "density";
    e.ks = numerics::ks_one_sample(sample, [&](double x) { return DensityField::cdf_from(g, c, x); });
    e.w1 = numerics::w1_one_sample(sample, [&](double u) { return DensityField::quantile_from(g, c, u); });
    e.moments_sample = numerics::raw_moments(sample);
    e.moments_reference = density.moments(k);
    e.n_sample = sample.size();
    return e;
}

/// Sample against a closed-form law given by CDF and quantile function.
/// Reference moments use the midpoint rule on 20000 quantile levels.
inline MimicEntry compare_marginals(std::span<const double> sample, const std::function<double(double)>& cdf,
                                    const std::function<double(double)>& quantile, double t)
{
    detail::require_sample(sample, "sample");
    MimicEntry e;
    e.t = t;
    e.reference = "cdf";
    e.ks = numerics::ks_one_sample(sample, cdf);
    e.w1 = numerics::w1_one_sample(sample, quantile);
    e.moments_sample = numerics::raw_moments(sample);
    constexpr std::size_t levels = 20000;
    std::vector<double> q(levels);
    for (std::size_t i = 0; i < levels; ++i) q[i] = quantile((static_cast<double>(i) + 0.5) / levels);
    e.moments_reference = numerics::raw_moments(q);
    e.n_sample = sample.size();
    return e;
}

/// L1 distance between row k of a density field and a closed-form density,
/// trapezoid rule on the grid.
inline double l1_distance(const DensityField& d, std::size_t k, const std::function<double(double)>& pdf)
{
    const auto r = d.row(k);
    const auto& g = d.x_grid;
    double s = 0.0;
    for (std::size_t i = 0; i < d.nx(); ++i) {
        const double w = (i == 0 || i + 1 == d.nx()) ? 0.5 : 1.0;
        s += w * std::abs(r[i] - pdf(g.point(i)));
    }
    return s * g.step();
}

struct MimicReport {
    std::string route;
    std::vector<MimicEntry> entries;
    double ks_tolerance = std::numeric_limits<double>::infinity();

    double max_ks() const
    {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.ks);
        return m;
    }
    bool passed() const { return max_ks() <= ks_tolerance; }
};

inline nlohmann::json to_json(const MimicEntry& e)
{
    return {{"t", e.t},
            {"reference", e.reference},
            {"ks", e.ks},
            {"w1", e.w1},
            {"moments_sample", e.moments_sample},
            {"moments_reference", e.moments_reference},
            {"n_sample", e.n_sample},
            {"n_reference", e.n_reference}};
}

inline nlohmann::json to_json(const MimicReport& r)
{
    nlohmann::json j;
    j["route"] = r.route;
    j["ks_tolerance"] = std::isfinite(r.ks_tolerance) ? nlohmann::json(r.ks_tolerance) : nlohmann::json(nullptr);
    j["max_ks"] = r.max_ks();
    j["passed"] = r.passed();
    j["entries"] = nlohmann::json::array();
    for (const auto& e : r.entries) j["entries"].push_back(to_json(e));
    return j;
}

struct MartingaleCheckpoint {
    double t = 0.0;
    double mean = 0.0;
    double standard_error = 0.0;  // of mean(X_t) - mean(X_0), paired
    double z_score = 0.0;
    bool passed = true;
};

struct MartingaleReport {
    double initial_mean = 0.0;
    double threshold = 3.0;
    std::vector<MartingaleCheckpoint> checkpoints;

    bool passed() const
    {
        return std::all_of(checkpoints.begin(), checkpoints.end(), [](const auto& c) { return c.passed; });
    }
};

/// Mean-constancy test on the first coordinate: at every checkpoint,
/// |mean(X_t - X_0)| <= threshold * stderr, the standard error taken from the
/// per-path increments. A zero standard error passes only if the mean is
/// unchanged.
inline MartingaleReport check_martingale_preservation(const PathEnsemble& e, const std::vector<double>& checkpoints,
                                                      double threshold = 3.0)
{
    e.validate();
    detail::require(e.n_paths >= 2, "martingale check: need at least 2 paths");
    MartingaleReport rep;
    rep.threshold = threshold;
    const auto x0 = e.marginal(0);
    rep.initial_mean = numerics::mean_stats(x0).mean;
    for (double t : checkpoints) {
        const std::size_t r = e.nearest_record(t);
        const auto xt = e.marginal(r);
        std::vector<double> inc(xt.size());
        for (std::size_t p = 0; p < xt.size(); ++p) inc[p] = xt[p] - x0[p];
        const auto s = numerics::mean_stats(inc);
        MartingaleCheckpoint c;
        c.t = e.time(r);
        c.mean = numerics::mean_stats(xt).mean;
        c.standard_error = s.standard_error;
        if (s.standard_error > 0.0) {
            c.z_score = s.mean / s.standard_error;
            c.passed = std::abs(c.z_score) <= threshold;
        } else {
            c.z_score = s.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), s.mean);
            c.passed = s.mean == 0.0;
        }
        rep.checkpoints.push_back(c);
    }
    return rep;
}

inline nlohmann::json to_json(const MartingaleReport& r)
{
    nlohmann::json j;
    j["initial_mean"] = r.initial_mean;
    j["threshold"] = r.threshold;
    j["passed"] = r.passed();
    j["checkpoints"] = nlohmann::json::array();
    for (const auto& c : r.checkpoints) {
        j["checkpoints"].push_back({{"t", c.t},
                                    {"mean", c.mean},
                                    {"standard_error", c.standard_error},
                                    {"z_score", std::isfinite(c.z_score) ? nlohmann::json(c.z_score)
                                                                         : nlohmann::json(c.z_score > 0 ? "inf" : "-inf")},
                                    {"passed", c.passed}});
    }
    return j;
}

/// Constants of the standing assumptions. Infinite bounds are reported but
/// cannot fail.
struct AssumptionAuditConfig {
    double k1 = std::numeric_limits<double>::infinity();  // sup |beta|, sup |delta|
    double k2 = std::numeric_limits<double>::infinity();  // sup int (1 ^ y^2) m(dy)
    double k3 = std::numeric_limits<double>::infinity();  // intensity of the non-stable remainder
    double ellipticity = 1e-8;                            // floor for min a
    std::vector<double> tail_radii{1.0, 2.0, 4.0, 8.0};
    double tail_tolerance = 1e-2;  // last tail mass must be below this
    double lipschitz_bound = std::numeric_limits<double>::infinity();
    std::optional<StableTail> declared_stable;  // for coefficient inputs
    std::size_t max_histories = 256;            // states used for amplitude-dependent integrals
};

struct AssumptionCheck {
    std::string id;     // "H1", "H2", "A3", ...
    std::string title;
    bool passed = true;
    bool heuristic = false;
    nlohmann::json measured = nlohmann::json::object();
    std::string message;
};

struct AuditReport {
    std::string subject;
    std::vector<AssumptionCheck> checks;

    bool passed() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed || c.heuristic; });
    }
    const AssumptionCheck* find(const std::string& id) const
    {
        for (const auto& c : checks)
            if (c.id == id) return &c;
        return nullptr;
    }
};

inline nlohmann::json to_json(const AuditReport& r)
{
    nlohmann::json j;
    j["schema_version"] = kAuditSchemaVersion;
    j["subject"] = r.subject;
    j["passed"] = r.passed();
    j["checks"] = nlohmann::json::array();
    for (const auto& c : r.checks)
        j["checks"].push_back({{"id", c.id},
                               {"title", c.title},
                               {"passed", c.passed},
                               {"heuristic", c.heuristic},
                               {"measured", c.measured},
                               {"message", c.message}});
    return j;
}

namespace detail {

inline nlohmann::json bound_json(double v)
{
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("inf");
}

inline AssumptionCheck bound_check(double sup_drift, double sup_diffusion, double k1)
{
    AssumptionCheck c;
    c.id = "H1";
    c.title = "bounded drift and diffusion";
    c.measured = {{"sup_drift", sup_drift}, {"sup_diffusion", sup_diffusion}, {"K1", bound_json(k1)}};
    c.passed = sup_drift <= k1 && sup_diffusion <= k1;
    c.message = c.passed ? "sup |beta| and sup |delta| within K1" : "coefficient bound K1 exceeded";
    return c;
}

inline AssumptionCheck integrability_check(double sup_integrability, const std::vector<double>& radii,
                                           const std::vector<double>& tails, const AssumptionAuditConfig& cfg)
{
    AssumptionCheck c;
    c.id = "H2";
    c.title = "uniform integrability of the jump kernel";
    bool monotone = true;
    for (std::size_t i = 1; i < tails.size(); ++i) monotone = monotone && tails[i] <= tails[i - 1] * (1.0 + 1e-12);
    const bool small_tail = tails.empty() || tails.back() <= cfg.tail_tolerance;
    c.measured = {{"sup_integrability", sup_integrability},
                  {"K2", bound_json(cfg.k2)},
                  {"tail_radii", radii},
                  {"tail_masses", tails},
                  {"tail_tolerance", cfg.tail_tolerance}};
    c.passed = sup_integrability <= cfg.k2 && monotone && small_tail;
    if (c.passed) c.message = "integrability bound and tail decay hold";
    else if (sup_integrability > cfg.k2) c.message = "integral of (1 ^ |y|^2) m exceeds K2";
    else if (!monotone) c.message = "tail masses are not nonincreasing over the radii schedule";
    else c.message = "tail mass at the largest radius exceeds the tolerance";
    return c;
}

inline AssumptionCheck nondegeneracy_check(double min_a, const StableTail* stable, double remainder_intensity,
                                           const AssumptionAuditConfig& cfg)
{
    AssumptionCheck c;
    c.id = "A3";
    c.title = "non-degeneracy (Assumption 3)";
    c.measured = {{"min_a", min_a}, {"ellipticity", cfg.ellipticity}, {"stable_tail", stable != nullptr}};
    if (min_a >= cfg.ellipticity) {
        c.passed = true;
        c.message = "Assumption 3 holds: uniformly elliptic";
        return c;
    }
    if (stable && stable->c > 0.0) {
        c.measured["stable_c"] = stable->c;
        c.measured["stable_exponent"] = stable->exponent;
        c.measured["remainder_intensity"] = remainder_intensity;
        c.measured["K3"] = bound_json(cfg.k3);
        c.passed = remainder_intensity <= cfg.k3;
        c.message = c.passed ? "Assumption 3 holds: stable-dominated jump part"
                             : "Assumption 3 fails: remainder of the stable part exceeds K3";
        return c;
    }
    c.passed = false;
    c.message = "Assumption 3 fails: a is not bounded below by the ellipticity floor and no stable tail is declared";
    return c;
}

inline AssumptionCheck continuity_check(const ProjectedCoefficients& co, double bound)
{
    AssumptionCheck c;
    c.id = "A2";
    c.title = "continuity of projected coefficients (heuristic Lipschitz surrogate)";
    c.heuristic = true;
    double lb = 0.0, la = 0.0;
    const double dz = co.z_grid.step();
    for (std::size_t k = 0; k < co.nt(); ++k)
        for (std::size_t i = 0; i + 1 < co.nz(); ++i) {
            if (co.filled[co.cell(k, i)] || co.filled[co.cell(k, i + 1)]) continue;
            lb = std::max(lb, std::abs(co.b[co.cell(k, i + 1)] - co.b[co.cell(k, i)]) / dz);
            la = std::max(la, std::abs(co.a[co.cell(k, i + 1)] - co.a[co.cell(k, i)]) / dz);
        }
    c.measured = {{"lipschitz_b", lb}, {"lipschitz_a", la}, {"bound", bound_json(bound)}};
    c.passed = lb <= bound && la <= bound;
    c.message = "finite-difference slopes across neighbouring z cells; not a proof of continuity";
    return c;
}

inline double remainder_intensity(const StableTail& s)
{
    return s.remainder ? s.remainder->intensity : 0.0;
}

} // namespace detail

/// Audit of gridded projected coefficients.
inline AuditReport audit_assumptions(const ProjectedCoefficients& co, const AssumptionAuditConfig& cfg = {})
{
    co.validate();
    AuditReport rep;
    rep.subject = "projected coefficients";
    double sup_b = 0.0, sup_d = 0.0, min_a = std::numeric_limits<double>::infinity(), sup_int = 0.0;
    for (std::size_t q = 0; q < co.b.size(); ++q) {
        sup_b = std::max(sup_b, std::abs(co.b[q]));
        sup_d = std::max(sup_d, std::sqrt(std::max(0.0, co.a[q])));
        min_a = std::min(min_a, co.a[q]);
    }
    std::vector<double> tails(cfg.tail_radii.size(), 0.0);
    if (co.has_jumps()) {
        const double dy = co.y_grid.step();
        for (std::size_t k = 0; k < co.nt(); ++k)
            for (std::size_t i = 0; i < co.nz(); ++i) {
                sup_int = std::max(sup_int, co.integrability(k, i));
                const auto row = co.kernel(k, i);
                for (std::size_t r = 0; r < tails.size(); ++r) {
                    const double R = cfg.tail_radii[r];
                    double m = 0.0;
                    for (std::size_t j = 0; j < co.ny(); ++j)
                        if (std::abs(co.y_grid.point(j)) >= R) m += row[j] * dy;
                    if (std::abs(co.y_grid.lo()) >= R) m += co.tail_lo[co.cell(k, i)];
                    if (std::abs(co.y_grid.hi()) >= R) m += co.tail_hi[co.cell(k, i)];
                    tails[r] = std::max(tails[r], m);
                }
            }
    }
    rep.checks.push_back(detail::bound_check(sup_b, sup_d, cfg.k1));
    rep.checks.push_back(detail::integrability_check(sup_int, cfg.tail_radii, tails, cfg));
    const StableTail* st = cfg.declared_stable ? &*cfg.declared_stable : nullptr;
    rep.checks.push_back(
        detail::nondegeneracy_check(min_a, st, st ? detail::remainder_intensity(*st) : 0.0, cfg));
    rep.checks.push_back(detail::continuity_check(co, cfg.lipschitz_bound));
    return rep;
}

/// Audit of a model along a simulated ensemble (d = 1 for the jump
/// integrals of amplitude-driven and compensator-direct models).
inline AuditReport audit_assumptions(const ItoModel& m, const PathEnsemble& e, const AssumptionAuditConfig& cfg = {})
{
    m.validate();
    e.validate();
    detail::require(e.has_characteristics(), "audit: ensemble carries no recorded characteristics");
    AuditReport rep;
    rep.subject = m.name;
    const std::size_t d = e.dim;
    double sup_b = 0.0, sup_d = 0.0, min_a = std::numeric_limits<double>::infinity();
    const std::size_t nr = e.n_recorded();
    for (std::size_t p = 0; p < e.n_paths; ++p)
        for (std::size_t r = 0; r < nr; ++r) {
            const double* b = e.drift.data() + (p * nr + r) * d;
            const double* s = e.diffusion_sq.data() + (p * nr + r) * d * d;
            double nb = 0.0, tr = 0.0, gersh = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < d; ++i) {
                nb += b[i] * b[i];
                tr += s[i * d + i];
                double off = 0.0;
                for (std::size_t j = 0; j < d; ++j)
                    if (j != i) off += std::abs(s[i * d + j]);
                gersh = std::min(gersh, s[i * d + i] - off);
            }
            sup_b = std::max(sup_b, std::sqrt(nb));
            sup_d = std::max(sup_d, std::sqrt(std::max(0.0, tr)));  // Frobenius norm of delta
            min_a = std::min(min_a, gersh);
        }

    double sup_int = 0.0;
    std::vector<double> tails(cfg.tail_radii.size(), 0.0);
    const StableTail* stable = nullptr;
    double remainder = 0.0;
    if (const auto* pd = std::get_if<PoissonDriven>(&m.jumps)) {
        stable = pd->levy.stable_tail();
        if (stable) remainder = detail::remainder_intensity(*stable);
        if (!pd->amplitude) {
            double scale = 1.0;
            if (pd->rate_scale) {
                scale = 0.0;
                const std::size_t stride = std::max<std::size_t>(1, e.n_paths * nr / cfg.max_histories);
                for (std::size_t q = 0; q < e.n_paths * nr; q += stride) {
                    const std::size_t p = q / nr, r = q % nr;
                    std::span<const double> aux;
                    if (e.has_aux()) aux = {e.aux.data() + (p * nr + r) * e.aux_dim, e.aux_dim};
                    scale = std::max(scale, pd->rate_scale(e.time(r), History{e.state(p, r), aux}));
                }
            }
            sup_int = scale * pd->levy.integrability();
            for (std::size_t r = 0; r < tails.size(); ++r) tails[r] = scale * pd->levy.tail_mass(cfg.tail_radii[r]);
        } else {
            detail::require(d == 1, "audit: amplitude-driven jumps are audited for d = 1 only");
            const std::size_t stride = std::max<std::size_t>(1, e.n_paths * nr / cfg.max_histories);
            std::vector<double> out(1);
            for (std::size_t q = 0; q < e.n_paths * nr; q += stride) {
                const std::size_t p = q / nr, r = q % nr;
                std::span<const double> aux;
                if (e.has_aux()) aux = {e.aux.data() + (p * nr + r) * e.aux_dim, e.aux_dim};
                const History h{e.state(p, r), aux};
                const double t = e.time(r);
                const double scale = pd->rate_scale ? pd->rate_scale(t, h) : 1.0;
                auto psi2 = [&](std::span<const double> y) {
                    pd->amplitude(t, h, y, out);
                    return out[0] * out[0];
                };
                sup_int = std::max(sup_int, scale * pd->levy.integrate([&](std::span<const double> y) {
                    return std::min(1.0, psi2(y));
                }));
                for (std::size_t k = 0; k < tails.size(); ++k) {
                    const double R2 = cfg.tail_radii[k] * cfg.tail_radii[k];
                    tails[k] = std::max(tails[k], scale * pd->levy.integrate_large([&](std::span<const double> y) {
                        return psi2(y) >= R2 ? 1.0 : 0.0;
                    }));
                }
            }
        }
    } else if (e.has_compensator()) {
        const auto& g = e.compensator_grid;
        const std::size_t ny = g.size();
        for (std::size_t q = 0; q < e.n_paths * nr; ++q) {
            const double* row = e.compensator.data() + q * ny;
            double s = 0.0;
            for (std::size_t j = 0; j < ny; ++j) s += std::min(1.0, g.point(j) * g.point(j)) * row[j] * g.step();
            sup_int = std::max(sup_int, s);
            for (std::size_t k = 0; k < tails.size(); ++k) {
                double t = 0.0;
                for (std::size_t j = 0; j < ny; ++j)
                    if (std::abs(g.point(j)) >= cfg.tail_radii[k]) t += row[j] * g.step();
                tails[k] = std::max(tails[k], t);
            }
        }
    }
    rep.checks.push_back(detail::bound_check(sup_b, sup_d, cfg.k1));
    rep.checks.back().measured["declared_drift_bound"] = detail::bound_json(m.drift_bound);
    rep.checks.back().measured["declared_diffusion_bound"] = detail::bound_json(m.diffusion_bound);
    rep.checks.push_back(detail::integrability_check(sup_int, cfg.tail_radii, tails, cfg));
    if (!stable && cfg.declared_stable) {
        stable = &*cfg.declared_stable;
        remainder = detail::remainder_intensity(*stable);
    }
    rep.checks.push_back(detail::nondegeneracy_check(min_a, stable, remainder, cfg));
    return rep;
}

} // namespace mproj
