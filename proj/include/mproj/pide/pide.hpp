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
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mproj/core/coefficients.hpp"
#include "mproj/core/density.hpp"
#include "mproj/core/error.hpp"
#include "mproj/core/grid.hpp"

namespace mproj {

/// Symmetric alpha-stable jump part c / |y|^(1 + exponent) handled by the
/// experimental pure-jump treatment: jumps below dx become diffusion, the
/// rest become transfers between grid nodes.
struct StableJumpPart {
    double c = 0.0;
    double exponent = 1.0;
};

struct GeneratorOptions {
    bool allow_degenerate = false;  // accept a = 0 somewhere (transport or pure-jump runs)
    std::optional<StableJumpPart> experimental_stable;
};

/// Discretised generator L = D + J on a uniform x grid.
///
/// D is tridiagonal: first-order upwind on the effective drift
/// b - int_{|y|<=1} y n(dy) plus central differences for a/2, with
/// reflecting one-sided rows at both ends. J holds one quadrature row per
/// node: each kernel cell sends rate n_j dy to x_i + y_j, split linearly
/// between the neighbouring nodes, and the diagonal loses the total
/// intensity. Jumps that leave the grid are recorded in lost_rate, so rows
/// of L sum to -lost_rate.
struct GeneratorMatrix {
    UniformGrid x;
    std::vector<double> lower, diag, upper;  // D
    std::vector<std::size_t> row_ptr;        // J off-diagonal, CSR
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    std::vector<double> jump_diag;  // -intensity
    std::vector<double> lost_rate;
    double lambda_max = 0.0;

    std::size_t size() const { return x.size(); }

    /// (D f)_i.
    void apply_d(std::span<const double> f, std::span<double> out) const
    {
        const std::size_t n = size();
        for (std::size_t i = 0; i < n; ++i) {
            double v = diag[i] * f[i];
            if (i > 0) v += lower[i] * f[i - 1];
            if (i + 1 < n) v += upper[i] * f[i + 1];
            out[i] = v;
        }
    }

    /// out += (J f).
    void add_j(std::span<const double> f, std::span<double> out) const
    {
        for (std::size_t i = 0; i < size(); ++i) {
            double v = jump_diag[i] * f[i];
            for (std::size_t q = row_ptr[i]; q < row_ptr[i + 1]; ++q) v += vals[q] * f[cols[q]];
            out[i] += v;
        }
    }

    /// out += (J^T p).
    void add_j_transpose(std::span<const double> p, std::span<double> out) const
    {
        for (std::size_t i = 0; i < size(); ++i) {
            out[i] += jump_diag[i] * p[i];
            for (std::size_t q = row_ptr[i]; q < row_ptr[i + 1]; ++q) out[cols[q]] += vals[q] * p[i];
        }
    }

    std::vector<double> apply(std::span<const double> f) const
    {
        std::vector<double> out(size());
        apply_d(f, out);
        add_j(f, out);
        return out;
    }

    std::vector<double> apply_transpose(std::span<const double> p) const
    {
        const std::size_t n = size();
        std::vector<double> out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            out[i] += diag[i] * p[i];
            if (i > 0) out[i - 1] += lower[i] * p[i];
            if (i + 1 < n) out[i + 1] += upper[i] * p[i];
        }
        add_j_transpose(p, out);
        return out;
    }

    double row_sum(std::size_t i) const
    {
        double s = diag[i] + lower[i] + upper[i] + jump_diag[i];
        for (std::size_t q = row_ptr[i]; q < row_ptr[i + 1]; ++q) s += vals[q];
        return s;
    }

    std::vector<double> to_dense() const
    {
        const std::size_t n = size();
        std::vector<double> m(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            m[i * n + i] += diag[i] + jump_diag[i];
            if (i > 0) m[i * n + i - 1] += lower[i];
            if (i + 1 < n) m[i * n + i + 1] += upper[i];
            for (std::size_t q = row_ptr[i]; q < row_ptr[i + 1]; ++q) m[i * n + cols[q]] += vals[q];
        }
        return m;
    }
};

/// Assemble L at time t from gridded coefficients (linear in t and z,
/// frozen at the edges of the coefficient grids).
inline GeneratorMatrix build_generator_matrix(const ProjectedCoefficients& c, const UniformGrid& x, double t,
                                              const GeneratorOptions& opt = {})
{
    detail::require(x.size() >= 3, "pide: x grid needs >= 3 nodes");
    const std::size_t n = x.size();
    const double dx = x.step();
    const TimeLocation tl = locate_time(c.times, t);
    GeneratorMatrix g;
    g.x = x;
    g.lower.assign(n, 0.0);
    g.diag.assign(n, 0.0);
    g.upper.assign(n, 0.0);
    g.jump_diag.assign(n, 0.0);
    g.lost_rate.assign(n, 0.0);
    g.row_ptr.assign(1, 0);

    const std::size_t ny = c.ny();
    const double dy = ny ? c.y_grid.step() : 0.0;
    std::vector<double> row(ny);
    double stable_var = 0.0;
    if (opt.experimental_stable) {
        const auto& s = *opt.experimental_stable;
        detail::require(s.c >= 0.0 && s.exponent > 0.0 && s.exponent < 2.0, "pide: invalid stable jump part");
        stable_var = 2.0 * s.c * std::pow(dx, 2.0 - s.exponent) / (2.0 - s.exponent);
    }

    auto add_jump = [&](std::size_t i, double y, double rate) {
        if (!(rate > 0.0)) return 0.0;
        g.jump_diag[i] -= rate;
        const GridLocation loc = x.locate(x.point(i) + y);
        if (loc.clamped) {
            g.lost_rate[i] += rate;
        } else {
            if (loc.weight < 1.0) {
                g.cols.push_back(loc.index);
                g.vals.push_back((1.0 - loc.weight) * rate);
            }
            if (loc.weight > 0.0) {
                g.cols.push_back(loc.index + 1);
                g.vals.push_back(loc.weight * rate);
            }
        }
        return std::abs(y) <= 1.0 ? y * rate : 0.0;
    };

    double min_a = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x.point(i);
        double b = c.drift_at(tl, xi);
        double a = c.a_at(tl, xi) + stable_var;
        double comp = 0.0;
        if (ny) {
            double tlo = 0.0, thi = 0.0;
            c.kernel_at(tl, xi, row, tlo, thi);
            for (std::size_t j = 0; j < ny; ++j) {
                const double yj = c.y_grid.point(j);
                const double w = row[j] * dy;
                if (std::abs(yj) <= c.jump_cutoff) {
                    if (c.small_mode == SmallJumpMode::gaussian) a += yj * yj * w;
                    continue;
                }
                comp += add_jump(i, yj, w);
            }
            comp += add_jump(i, c.y_grid.lo(), tlo);
            comp += add_jump(i, c.y_grid.hi(), thi);
        }
        if (opt.experimental_stable && opt.experimental_stable->c > 0.0) {
            const auto& s = *opt.experimental_stable;
            const double be = s.exponent;
            auto mass = [&](double lo, double hi) { return s.c / be * (std::pow(lo, -be) - std::pow(hi, -be)); };
            for (std::size_t m = 1; m < n; ++m) {
                const double md = static_cast<double>(m);
                const double w = mass(std::max(dx, (md - 0.5) * dx), (md + 0.5) * dx);
                comp += add_jump(i, md * dx, w);
                comp += add_jump(i, -md * dx, w);
            }
            const double far = s.c / be * std::pow((static_cast<double>(n) - 0.5) * dx, -be);
            g.jump_diag[i] -= 2.0 * far;
            g.lost_rate[i] += 2.0 * far;
        }
        g.row_ptr.push_back(g.cols.size());
        g.lambda_max = std::max(g.lambda_max, -g.jump_diag[i]);
        b -= comp;
        min_a = std::min(min_a, a);
        if (a < 0.0) throw NumericError("pide: negative diffusion coefficient at x = " + std::to_string(xi));
        const double diff = 0.5 * a / (dx * dx);
        const double lo = diff + std::max(-b, 0.0) / dx;
        const double hi = diff + std::max(b, 0.0) / dx;
        if (i > 0) g.lower[i] = lo;
        if (i + 1 < n) g.upper[i] = hi;
        g.diag[i] = -(g.lower[i] + g.upper[i]);
    }
    if (!(min_a > 0.0) && !opt.allow_degenerate && !opt.experimental_stable)
        throw ConfigError("pide: the diffusion coefficient vanishes on the grid; the default solver needs a > 0 "
                          "(set allow_degenerate for transport or pure-jump runs)");
    return g;
}

enum class PideScheme {
    imex,            // drift and diffusion implicit, jumps explicit
    explicit_euler,  // everything explicit
};

struct PideOptions {
    UniformGrid x_grid;
    TimeGrid time;
    PideScheme scheme = PideScheme::imex;
    double cfl_limit = 0.9;
    double mass_tolerance = 1e-3;
    GeneratorOptions generator;
    std::vector<double> checkpoints;  // stored besides the initial and final rows
};

struct PideDiagnostics {
    std::vector<double> times;  // every step
    std::vector<double> mass;
    std::vector<double> min_density;
    std::vector<double> lost_mass;  // cumulative
    double max_mass_drift = 0.0;
    double max_lambda_dt = 0.0;
    std::size_t negative_steps = 0;  // steps with min p < -1e-8
};

namespace detail {

/// Solves the tridiagonal system sub[i] u[i-1] + mid[i] u[i] + sup[i] u[i+1] = rhs[i] in place.
inline void thomas_solve(std::vector<double>& sub, std::vector<double>& mid, std::vector<double>& sup,
                         std::vector<double>& rhs)
{
    const std::size_t n = mid.size();
    for (std::size_t i = 1; i < n; ++i) {
        if (!(std::abs(mid[i - 1]) > 1e-300)) throw NumericError("pide: tridiagonal solve broke down");
        const double m = sub[i] / mid[i - 1];
        mid[i] -= m * sup[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    if (!(std::abs(mid[n - 1]) > 1e-300)) throw NumericError("pide: tridiagonal solve broke down");
    rhs[n - 1] /= mid[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / mid[i];
}

inline double discrete_mass(std::span<const double> p, double dx)
{
    double s = 0.0;
    for (double v : p) s += v;
    return s * dx;
}

} // namespace detail

/// Forward Kolmogorov evolution p_{k+1} from p_k through the transpose of
/// the discrete generator. IMEX: (I - dt D^T(t_{k+1})) p_{k+1} = p_k + dt J^T(t_k) p_k.
inline DensityField evolve_forward(const DensityField& p0, const ProjectedCoefficients& coeffs, const PideOptions& opt,
                                   PideDiagnostics* diagnostics = nullptr)
{
    coeffs.validate();
    detail::require(p0.nt() >= 1, "pide: empty initial density");
    detail::require(p0.x_grid == opt.x_grid, "pide: initial density lives on a different grid");
    const auto first = p0.row(0);
    for (double v : first) detail::require(v >= 0.0 && std::isfinite(v), "pide: initial density must be >= 0");
    const double dx = opt.x_grid.step();
    const double m0 = detail::discrete_mass(first, dx);
    detail::require(std::abs(m0 - 1.0) <= 1e-6, "pide: initial density must have unit discrete mass");

    const std::size_t n = opt.x_grid.size();
    const std::size_t N = opt.time.n_steps();
    const double dt = opt.time.dt();
    std::vector<std::size_t> store;
    for (double t : opt.checkpoints) store.push_back(opt.time.nearest_step(t));
    store.push_back(N);
    std::sort(store.begin(), store.end());
    store.erase(std::unique(store.begin(), store.end()), store.end());

    DensityField out;
    out.x_grid = opt.x_grid;
    out.push(opt.time.time(0), first);
    std::vector<double> p(first.begin(), first.end()), rhs(n), sub(n), mid(n), sup(n), tmp(n);
    PideDiagnostics diag;
    diag.times.push_back(opt.time.time(0));
    diag.mass.push_back(m0);
    diag.min_density.push_back(*std::min_element(p.begin(), p.end()));
    diag.lost_mass.push_back(0.0);
    double lost = 0.0;
    std::size_t next_store = 0;
    if (!store.empty() && store.front() == 0) ++next_store;

    GeneratorMatrix g_now = build_generator_matrix(coeffs, opt.x_grid, opt.time.time(0), opt.generator);
    for (std::size_t k = 0; k < N; ++k) {
        const double lambda_dt = g_now.lambda_max * dt;
        diag.max_lambda_dt = std::max(diag.max_lambda_dt, lambda_dt);
        if (lambda_dt > opt.cfl_limit) {
            std::ostringstream msg;
            msg << "pide: jump CFL violated at t = " << opt.time.time(k) << " (lambda_max * dt = " << lambda_dt
                << " > " << opt.cfl_limit << "); use dt <= " << opt.cfl_limit / g_now.lambda_max;
            throw ConfigError(msg.str());
        }
        for (std::size_t i = 0; i < n; ++i) lost += dt * g_now.lost_rate[i] * p[i] * dx;
        if (opt.scheme == PideScheme::explicit_euler) {
            double worst = 0.0;
            for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, -(g_now.diag[i] + g_now.jump_diag[i]));
            if (worst * dt > 1.0) {
                std::ostringstream msg;
                msg << "pide: explicit scheme unstable at t = " << opt.time.time(k) << "; use dt <= " << 1.0 / worst;
                throw ConfigError(msg.str());
            }
            const auto lp = g_now.apply_transpose(p);
            for (std::size_t i = 0; i < n; ++i) p[i] += dt * lp[i];
            g_now = build_generator_matrix(coeffs, opt.x_grid, opt.time.time(k + 1), opt.generator);
        } else {
            std::fill(tmp.begin(), tmp.end(), 0.0);
            g_now.add_j_transpose(p, tmp);
            for (std::size_t i = 0; i < n; ++i) rhs[i] = p[i] + dt * tmp[i];
            GeneratorMatrix g_next = build_generator_matrix(coeffs, opt.x_grid, opt.time.time(k + 1), opt.generator);
            for (std::size_t i = 0; i < n; ++i) {
                mid[i] = 1.0 - dt * g_next.diag[i];
                sub[i] = i > 0 ? -dt * g_next.upper[i - 1] : 0.0;
                sup[i] = i + 1 < n ? -dt * g_next.lower[i + 1] : 0.0;
            }
            detail::thomas_solve(sub, mid, sup, rhs);
            p.swap(rhs);
            g_now = std::move(g_next);
        }
        for (double v : p)
            if (!std::isfinite(v)) throw NumericError("pide: non-finite density at step " + std::to_string(k + 1));
        const double m = detail::discrete_mass(p, dx);
        const double mn = *std::min_element(p.begin(), p.end());
        const double t = opt.time.time(k + 1);
        diag.times.push_back(t);
        diag.mass.push_back(m);
        diag.min_density.push_back(mn);
        diag.lost_mass.push_back(lost);
        diag.max_mass_drift = std::max(diag.max_mass_drift, std::abs(m - m0));
        if (mn < -1e-8) ++diag.negative_steps;
        if (std::abs(m - m0) > opt.mass_tolerance) {
            std::ostringstream msg;
            msg << "pide: mass drift " << (m - m0) << " exceeds " << opt.mass_tolerance << " at step " << (k + 1)
                << " (t = " << t << ", lost through the grid edges: " << lost << ", min density " << mn << ")";
            throw NumericError(msg.str());
        }
        if (next_store < store.size() && store[next_store] == k + 1) {
            out.push(t, p);
            ++next_store;
        }
    }
    if (diagnostics) *diagnostics = std::move(diag);
    return out;
}

} // namespace mproj
