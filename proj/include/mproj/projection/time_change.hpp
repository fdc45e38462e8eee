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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mproj/core/coefficients.hpp"
#include "mproj/core/ensemble.hpp"
#include "mproj/core/error.hpp"
#include "mproj/core/levy.hpp"
#include "mproj/core/model.hpp"
#include "mproj/numerics/quadrature.hpp"
#include "mproj/projection/estimator.hpp"

namespace mproj {

/// A one-dimensional Levy measure resolved on a y grid of cells.
struct DiscretizedLevy {
    std::vector<double> cell_mass;  // nu(cell j)
    double tail_lo = 0.0;           // nu below the first cell
    double tail_hi = 0.0;           // nu above the last cell
    double small_variance = 0.0;    // second moment of unsimulated jumps (gaussian mode)
};

namespace detail {

template <class F>
double density_mass(F&& dens, double a, double b, double cutoff)
{
    numerics::QuadratureOptions q;
    q.tolerance = 1e-10;
    double s = 0.0;
    auto piece = [&](double lo, double hi) {
        if (hi > lo) s += integrate_split(dens, lo, hi, q);
    };
    piece(a, std::min(b, -cutoff));
    piece(std::max(a, cutoff), b);
    return s;
}

inline void add_atoms(const FiniteActivity& f, const UniformGrid& y, DiscretizedLevy& out)
{
    const double edge_lo = y.lo() - 0.5 * y.step();
    const double edge_hi = y.hi() + 0.5 * y.step();
    if (f.law.is_discrete()) {
        for (const auto& a : f.law.atom_list()) {
            const double v = a.y[0];
            const double m = f.intensity * a.probability;
            if (v < edge_lo) out.tail_lo += m;
            else if (v >= edge_hi) out.tail_hi += m;
            else out.cell_mass[y.nearest(v)] += m;
        }
        return;
    }
    auto pdf = [&](double v) { return f.law.pdf(v); };
    for (std::size_t j = 0; j < y.size(); ++j)
        out.cell_mass[j] += f.intensity * density_mass(pdf, y.point(j) - 0.5 * y.step(), y.point(j) + 0.5 * y.step(), 0.0);
    out.tail_lo += f.intensity * density_mass(pdf, -numerics::kInf, edge_lo, 0.0);
    out.tail_hi += f.intensity * density_mass(pdf, edge_hi, numerics::kInf, 0.0);
}

} // namespace detail

inline DiscretizedLevy discretize_levy(const LevyDensitySpec& levy, const UniformGrid& y)
{
    levy.validate();
    detail::require(levy.dimension() == 1, "levy discretisation: one-dimensional measures only");
    detail::require(y.size() >= 1, "levy discretisation: empty y grid");
    DiscretizedLevy out;
    out.cell_mass.assign(y.size(), 0.0);
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, FiniteActivity>) {
                detail::add_atoms(c, y, out);
            } else {
                auto dens = [&](double v) {
                    if constexpr (std::is_same_v<T, StableTail>)
                        return v == 0.0 ? 0.0 : c.c / std::pow(std::abs(v), 1.0 + c.exponent);
                    else
                        return v == 0.0 ? 0.0 : c.density(v);
                };
                const double dy = y.step();
                for (std::size_t j = 0; j < y.size(); ++j)
                    out.cell_mass[j] = detail::density_mass(dens, y.point(j) - 0.5 * dy, y.point(j) + 0.5 * dy, c.cutoff);
                out.tail_lo = detail::density_mass(dens, -numerics::kInf, y.lo() - 0.5 * dy, c.cutoff);
                out.tail_hi = detail::density_mass(dens, y.hi() + 0.5 * dy, numerics::kInf, c.cutoff);
                out.small_variance = levy.small_jump_variance();
                if constexpr (std::is_same_v<T, StableTail>)
                    if (c.remainder) detail::add_atoms(*c.remainder, y, out);
            }
        },
        levy.variant());
    return out;
}

/// Overwrite the jump kernel of `c` with a state-independent Levy measure.
/// When the jumps of the source are y itself at rate nu, the conditional
/// expectation of the compensator is nu in every cell, so this replaces the
/// noisy count of realised marks with its exact conditional mean.
inline void set_levy_kernel(ProjectedCoefficients& c, const LevyDensitySpec& levy)
{
    detail::require(c.ny() >= 1, "levy kernel: coefficients carry no y grid");
    const auto dl = discretize_levy(levy, c.y_grid);
    const double dy = c.y_grid.step();
    for (std::size_t cell = 0; cell < c.nt() * c.nz(); ++cell) {
        double* row = c.n.data() + cell * c.ny();
        for (std::size_t j = 0; j < c.ny(); ++j) row[j] = dl.cell_mass[j] / dy;
        c.tail_lo[cell] = dl.tail_lo;
        c.tail_hi[cell] = dl.tail_hi;
    }
    c.validate();
}

/// Coefficients b * alpha, sigma^2 * alpha and alpha * nu for a rate field
/// alpha[k][i] on (times, z_grid).
inline ProjectedCoefficients scale_levy_triplet(const TimeChangeSpec& spec, const std::vector<double>& alpha,
                                                const std::vector<double>& times, const UniformGrid& z_grid,
                                                const UniformGrid& y_grid)
{
    detail::require(std::isfinite(spec.b) && spec.sigma >= 0.0, "time change: invalid base triplet");
    const bool jumps = spec.levy.has_value() && y_grid.size() > 0;
    auto c = ProjectedCoefficients::zeros(times, z_grid, jumps ? y_grid : UniformGrid{});
    detail::require(alpha.size() == c.nt() * c.nz(), "time change: alpha field has the wrong shape");
    std::optional<DiscretizedLevy> dl;
    if (jumps) dl = discretize_levy(*spec.levy, y_grid);
    for (std::size_t cell = 0; cell < alpha.size(); ++cell) {
        const double al = alpha[cell];
        if (!(al > 0.0) || !std::isfinite(al))
            throw NumericError("time change: estimated rate alpha must be > 0 (got " + std::to_string(al) + ")");
        c.b[cell] = spec.b * al;
        c.a[cell] = spec.sigma * spec.sigma * al;
        if (!dl) continue;
        c.a[cell] += dl->small_variance * al;
        double* row = c.n.data() + cell * c.ny();
        for (std::size_t j = 0; j < c.ny(); ++j) row[j] = al * dl->cell_mass[j] / y_grid.step();
        c.tail_lo[cell] = al * dl->tail_lo;
        c.tail_hi[cell] = al * dl->tail_hi;
    }
    c.validate();
    return c;
}

struct TimeChangeProjectionOptions {
    UniformGrid z_grid;
    UniformGrid y_grid;
    std::optional<double> bandwidth;
    std::size_t min_effective = 50;
    EstimatorMode mode = EstimatorMode::kernel;
};

/// alpha(t, z) = E[theta_t | xi_{t-} = z] from an ensemble that recorded
/// the state and the auxiliary variables read by spec.rate.
inline std::vector<double> estimate_time_change_rate(const TimeChangeSpec& spec, const PathEnsemble& e,
                                                     const TimeChangeProjectionOptions& opt)
{
    spec.validate();
    e.validate();
    detail::require(e.dim == 1, "time change: one-dimensional ensembles only");
    detail::require(e.aux_dim == 0 || e.has_aux(), "time change: ensemble lacks the recorded aux variables");
    const std::size_t nr = e.n_recorded();
    const std::size_t nz = opt.z_grid.size();
    std::vector<double> alpha(nr * nz);
    std::vector<double> xs(e.n_paths), th(e.n_paths);
    for (std::size_t r = 0; r < nr; ++r) {
        const double t = e.time(r);
        for (std::size_t p = 0; p < e.n_paths; ++p) {
            xs[p] = e.values[p * nr + r];
            std::span<const double> aux;
            if (e.aux_dim) aux = {e.aux.data() + (p * nr + r) * e.aux_dim, e.aux_dim};
            th[p] = spec.rate(t, History{std::span<const double>(&xs[p], 1), aux});
            if (!(th[p] > 0.0) || !std::isfinite(th[p]))
                throw NumericError("time change: theta must be > 0 along paths (path " + std::to_string(p) + ")");
        }
        const auto row = kernel_regression(xs, th, opt.z_grid, opt.mode, opt.bandwidth, opt.min_effective);
        for (std::size_t i = 0; i < nz; ++i) {
            if (!(row[i] > 0.0)) throw NumericError("time change: estimated alpha is not positive");
            alpha[r * nz + i] = row[i];
        }
    }
    return alpha;
}

/// Markovian projection of a time-changed Levy process from an ensemble.
inline ProjectedCoefficients project_time_changed_levy(const TimeChangeSpec& spec, const PathEnsemble& e,
                                                       const TimeChangeProjectionOptions& opt,
                                                       std::vector<double>* alpha_out = nullptr)
{
    auto alpha = estimate_time_change_rate(spec, e, opt);
    std::vector<double> times(e.n_recorded());
    for (std::size_t r = 0; r < times.size(); ++r) times[r] = e.time(r);
    auto c = scale_levy_triplet(spec, alpha, times, opt.z_grid, opt.y_grid);
    if (alpha_out) *alpha_out = std::move(alpha);
    return c;
}

/// Same, with a known rate function alpha(t, z).
inline ProjectedCoefficients project_time_changed_levy(const TimeChangeSpec& spec,
                                                       const std::function<double(double t, double z)>& alpha,
                                                       const std::vector<double>& times, const UniformGrid& z_grid,
                                                       const UniformGrid& y_grid)
{
    std::vector<double> field(times.size() * z_grid.size());
    for (std::size_t k = 0; k < times.size(); ++k)
        for (std::size_t i = 0; i < z_grid.size(); ++i) field[k * z_grid.size() + i] = alpha(times[k], z_grid.point(i));
    return scale_levy_triplet(spec, field, times, z_grid, y_grid);
}

} // namespace mproj
