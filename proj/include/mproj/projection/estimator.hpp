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
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mproj/core/coefficients.hpp"
#include "mproj/core/ensemble.hpp"
#include "mproj/core/error.hpp"
#include "mproj/core/grid.hpp"
#include "mproj/core/parallel.hpp"

namespace mproj {

enum class EstimatorMode {
    kernel,     // Gaussian Nadaraya-Watson weights, normalised over the z grid
    histogram,  // each path counts for its nearest z node
};

struct EstimatorOptions {
    UniformGrid z_grid;
    UniformGrid y_grid;  // size 0: no jump kernel
    EstimatorMode mode = EstimatorMode::kernel;
    std::optional<double> bandwidth;  // Silverman's rule per time step when empty
    std::size_t min_effective = 50;
    double truncation = 5.0;  // kernel support in bandwidths
    double jump_cutoff = 0.0;
    SmallJumpMode small_mode = SmallJumpMode::drop;
    double integrability_bound = std::numeric_limits<double>::infinity();
    unsigned threads = 1;
};

struct EstimationReport {
    std::vector<double> bandwidths;  // per time
    std::vector<double> effective;   // [k][i] effective sample size (sum w)^2 / sum w^2
    std::vector<double> occupation;  // [k][i] sum of weights
    std::size_t filled_cells = 0;
    std::size_t empty_steps = 0;
    std::vector<std::string> warnings;
};

namespace detail {

/// Silverman's rule h = 1.06 sd N^(-1/5), floored at the grid step.
inline double silverman_bandwidth(std::span<const double> xs, double floor)
{
    const auto n = static_cast<double>(xs.size());
    double m = 0.0;
    for (double x : xs) m += x;
    m /= n;
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    const double sd = xs.size() > 1 ? std::sqrt(v / (n - 1.0)) : 0.0;
    return std::max(1.06 * sd * std::pow(n, -0.2), floor);
}

/// Calls visit(i, w) for the weights of one sample at x. Weights are
/// non-negative and sum to 1 over the grid (a partition of unity), so
/// occupation-weighted averages of the estimates reproduce sample means.
template <class Visit>
void nw_weights(double x, const UniformGrid& z, EstimatorMode mode, double h, double truncation, Visit&& visit)
{
    if (mode == EstimatorMode::histogram) {
        visit(z.nearest(x), 1.0);
        return;
    }
    const double reach = truncation * h;
    const double lo_u = std::ceil((x - reach - z.lo()) / z.step());
    const double hi_u = std::floor((x + reach - z.lo()) / z.step());
    const double last = static_cast<double>(z.size() - 1);
    const double i0d = std::max(0.0, lo_u);
    const double i1d = std::min(last, hi_u);
    if (i1d < i0d) {
        visit(z.nearest(x), 1.0);
        return;
    }
    const auto i0 = static_cast<std::size_t>(i0d);
    const auto i1 = static_cast<std::size_t>(i1d);
    double ws[4096];
    std::vector<double> big;
    double* w = ws;
    if (i1 - i0 + 1 > 4096) {
        big.resize(i1 - i0 + 1);
        w = big.data();
    }
    double total = 0.0;
    for (std::size_t i = i0; i <= i1; ++i) {
        const double u = (z.point(i) - x) / h;
        w[i - i0] = std::exp(-0.5 * u * u);
        total += w[i - i0];
    }
    if (!(total > 0.0)) {
        visit(z.nearest(x), 1.0);
        return;
    }
    for (std::size_t i = i0; i <= i1; ++i) visit(i, w[i - i0] / total);
}

/// Copies each under-populated cell of time row k from its nearest
/// populated neighbour (lower index first on ties). Returns false when the
/// whole row is under-populated.
inline bool fill_sparse_cells(ProjectedCoefficients& c, std::size_t k, const std::vector<double>& eff,
                              std::size_t min_effective, std::size_t& filled)
{
    const std::size_t nz = c.nz();
    std::vector<char> ok(nz);
    bool any = false;
    for (std::size_t i = 0; i < nz; ++i) {
        ok[i] = eff[k * nz + i] >= static_cast<double>(min_effective) && eff[k * nz + i] > 0.0;
        any = any || ok[i];
    }
    if (!any) return false;
    for (std::size_t i = 0; i < nz; ++i) {
        if (ok[i]) continue;
        std::size_t src = nz;
        for (std::size_t dist = 1; dist < nz && src == nz; ++dist) {
            if (i >= dist && ok[i - dist]) src = i - dist;
            else if (i + dist < nz && ok[i + dist]) src = i + dist;
        }
        const std::size_t to = c.cell(k, i), from = c.cell(k, src);
        c.b[to] = c.b[from];
        c.a[to] = c.a[from];
        c.tail_lo[to] = c.tail_lo[from];
        c.tail_hi[to] = c.tail_hi[from];
        std::copy_n(c.n.begin() + static_cast<std::ptrdiff_t>(from * c.ny()), c.ny(),
                    c.n.begin() + static_cast<std::ptrdiff_t>(to * c.ny()));
        c.filled[to] = 1;
        ++filled;
    }
    return true;
}

inline void copy_time_row(ProjectedCoefficients& c, std::size_t from, std::size_t to, bool kernel_only)
{
    const std::size_t nz = c.nz();
    for (std::size_t i = 0; i < nz; ++i) {
        const std::size_t d = c.cell(to, i), s = c.cell(from, i);
        if (!kernel_only) {
            c.b[d] = c.b[s];
            c.a[d] = c.a[s];
            c.filled[d] = 1;
        }
        c.tail_lo[d] = c.tail_lo[s];
        c.tail_hi[d] = c.tail_hi[s];
        std::copy_n(c.n.begin() + static_cast<std::ptrdiff_t>(s * c.ny()), c.ny(),
                    c.n.begin() + static_cast<std::ptrdiff_t>(d * c.ny()));
    }
}

/// Jump marks bucketed by recorded index: (path, size) in path order.
inline std::vector<std::vector<std::pair<std::size_t, double>>> bucket_jumps(const PathEnsemble& e)
{
    std::vector<std::ptrdiff_t> step_to_r(e.grid.n_steps() + 1, -1);
    for (std::size_t r = 0; r < e.n_recorded(); ++r) step_to_r[e.recorded_steps[r]] = static_cast<std::ptrdiff_t>(r);
    std::vector<std::vector<std::pair<std::size_t, double>>> buckets(e.n_recorded());
    for (std::size_t p = 0; p < e.n_paths; ++p)
        for (std::size_t j = e.jump_offsets[p]; j < e.jump_offsets[p + 1]; ++j) {
            const auto r = step_to_r[e.jump_steps[j]];
            if (r >= 0) buckets[static_cast<std::size_t>(r)].emplace_back(p, e.jump_sizes[j * e.dim]);
        }
    return buckets;
}

} // namespace detail

/// Nonparametric Markovian projection of a one-dimensional ensemble.
///
/// At each recorded time b and a are Nadaraya-Watson regressions of the
/// recorded drift and squared diffusion on the pre-jump state. The jump
/// kernel is either the weighted histogram of realised jumps per unit
/// occupation time (PoissonDriven models) or the regression of the recorded
/// compensator density (CompensatorDirect models). Times are never pooled.
inline ProjectedCoefficients estimate_projected_coefficients(const PathEnsemble& e, const EstimatorOptions& opt,
                                                             EstimationReport* report = nullptr)
{
    e.validate();
    detail::require(e.dim == 1, "projection: estimation needs a one-dimensional ensemble");
    detail::require(e.has_characteristics(), "projection: ensemble has no recorded characteristics");
    detail::require(opt.z_grid.size() >= 2, "projection: z grid needs >= 2 nodes");
    detail::require(!opt.bandwidth || *opt.bandwidth > 0.0, "projection: bandwidth must be > 0");
    detail::require(opt.truncation > 0.0, "projection: kernel truncation must be > 0");
    const bool regress_kernel = e.has_compensator();
    if (regress_kernel)
        detail::require(opt.y_grid == e.compensator_grid, "projection: y grid must match the recorded compensator grid");

    const std::size_t nr = e.n_recorded();
    std::vector<double> times(nr);
    for (std::size_t r = 0; r < nr; ++r) times[r] = e.time(r);
    auto c = ProjectedCoefficients::zeros(times, opt.z_grid, opt.y_grid);
    c.jump_cutoff = opt.jump_cutoff;
    c.small_mode = opt.small_mode;
    c.integrability_bound = opt.integrability_bound;

    const std::size_t nz = c.nz();
    const std::size_t ny = c.ny();
    const double dt = e.grid.dt();
    const double dy = ny ? c.y_grid.step() : 1.0;
    const auto buckets = ny && !regress_kernel ? detail::bucket_jumps(e) : decltype(detail::bucket_jumps(e)){};

    EstimationReport rep;
    rep.bandwidths.assign(nr, 0.0);
    rep.effective.assign(nr * nz, 0.0);
    rep.occupation.assign(nr * nz, 0.0);
    std::vector<std::uint8_t> row_empty(nr, 0);
    std::vector<std::uint8_t> coverage_warn(nr, 0);

    parallel_for(nr, opt.threads, [&](std::size_t r_begin, std::size_t r_end) {
        std::vector<double> s0(nz), s00(nz), s1(nz), s2(nz), cnt(nz * std::max<std::size_t>(ny, 1)), lo(nz), hi(nz);
        std::vector<double> xs(e.n_paths);
        for (std::size_t r = r_begin; r < r_end; ++r) {
            std::fill(s0.begin(), s0.end(), 0.0);
            std::fill(s00.begin(), s00.end(), 0.0);
            std::fill(s1.begin(), s1.end(), 0.0);
            std::fill(s2.begin(), s2.end(), 0.0);
            std::fill(cnt.begin(), cnt.end(), 0.0);
            std::fill(lo.begin(), lo.end(), 0.0);
            std::fill(hi.begin(), hi.end(), 0.0);
            std::size_t outside = 0;
            for (std::size_t p = 0; p < e.n_paths; ++p) {
                xs[p] = e.values[p * nr + r];
                if (xs[p] < opt.z_grid.lo() || xs[p] > opt.z_grid.hi()) ++outside;
            }
            if (static_cast<double>(outside) > 0.01 * static_cast<double>(e.n_paths)) coverage_warn[r] = 1;
            const double h = opt.bandwidth ? *opt.bandwidth : detail::silverman_bandwidth(xs, opt.z_grid.step());
            rep.bandwidths[r] = h;
            const auto* bucket = buckets.empty() ? nullptr : &buckets[r];
            std::size_t bpos = 0;
            for (std::size_t p = 0; p < e.n_paths; ++p) {
                const double beta = e.drift[p * nr + r];
                const double a2 = e.diffusion_sq[p * nr + r];
                const double* mrow = regress_kernel ? e.compensator.data() + (p * nr + r) * ny : nullptr;
                const std::size_t jb = bpos;
                if (bucket)
                    while (bpos < bucket->size() && (*bucket)[bpos].first == p) ++bpos;
                detail::nw_weights(xs[p], opt.z_grid, opt.mode, h, opt.truncation, [&](std::size_t i, double w) {
                    s0[i] += w;
                    s00[i] += w * w;
                    s1[i] += w * beta;
                    s2[i] += w * a2;
                    if (mrow) {
                        double* dst = cnt.data() + i * ny;
                        for (std::size_t j = 0; j < ny; ++j) dst[j] += w * mrow[j];
                    }
                    for (std::size_t q = jb; q < bpos; ++q) {
                        const double y = (*bucket)[q].second;
                        const double u = std::round((y - c.y_grid.lo()) / dy);
                        if (u < 0.0) lo[i] += w;
                        else if (u > static_cast<double>(ny - 1)) hi[i] += w;
                        else cnt[i * ny + static_cast<std::size_t>(u)] += w;
                    }
                });
            }
            for (std::size_t i = 0; i < nz; ++i) {
                const std::size_t cell = c.cell(r, i);
                rep.occupation[cell] = s0[i];
                rep.effective[cell] = s00[i] > 0.0 ? s0[i] * s0[i] / s00[i] : 0.0;
                if (!(s0[i] > 0.0)) continue;
                c.b[cell] = s1[i] / s0[i];
                c.a[cell] = s2[i] / s0[i];
                if (c.a[cell] < 0.0) throw NumericError("projection: negative regressed a");
                if (!ny) continue;
                auto row = c.kernel(r, i);
                if (regress_kernel) {
                    for (std::size_t j = 0; j < ny; ++j) row[j] = cnt[i * ny + j] / s0[i];
                } else {
                    const double occ = s0[i] * dt;
                    for (std::size_t j = 0; j < ny; ++j) row[j] = cnt[i * ny + j] / (occ * dy);
                    c.tail_lo[cell] = lo[i] / occ;
                    c.tail_hi[cell] = hi[i] / occ;
                }
            }
        }
    });

    // No step starts at the final time, so its jump rate is carried over.
    if (ny && !regress_kernel && nr >= 2 && e.recorded_steps.back() == e.grid.n_steps())
        detail::copy_time_row(c, nr - 2, nr - 1, true);

    for (std::size_t r = 0; r < nr; ++r) {
        if (!detail::fill_sparse_cells(c, r, rep.effective, opt.min_effective, rep.filled_cells)) {
            ++rep.empty_steps;
            row_empty[r] = 1;
        }
        if (coverage_warn[r])
            rep.warnings.push_back("z grid misses more than 1% of states at t = " + std::to_string(times[r]));
    }
    // Rows without any populated cell borrow the closest populated row.
    for (std::size_t r = 0; r < nr; ++r) {
        if (!row_empty[r]) continue;
        std::size_t src = nr;
        for (std::size_t dist = 1; dist < nr && src == nr; ++dist) {
            if (r >= dist && !row_empty[r - dist]) src = r - dist;
            else if (r + dist < nr && !row_empty[r + dist]) src = r + dist;
        }
        if (src == nr) throw NumericError("projection: no time step has enough samples in any z cell");
        detail::copy_time_row(c, src, r, false);
        rep.filled_cells += nz;
        rep.warnings.push_back("no populated z cell at t = " + std::to_string(times[r]) + "; copied a neighbouring time");
    }
    c.validate();
    if (report) *report = std::move(rep);
    return c;
}

/// Nadaraya-Watson regression of arbitrary per-path values on the state at
/// recorded index r, evaluated on the z grid, with the same weights and
/// fill policy as estimate_projected_coefficients. Cells below min_effective
/// are filled from the nearest populated cell; `filled` marks them.
inline std::vector<double> kernel_regression(std::span<const double> xs, std::span<const double> values,
                                             const UniformGrid& z, EstimatorMode mode, std::optional<double> bandwidth,
                                             std::size_t min_effective, std::vector<std::uint8_t>* filled = nullptr,
                                             std::vector<double>* effective = nullptr, double truncation = 5.0)
{
    detail::require(xs.size() == values.size() && !xs.empty(), "regression: sample size mismatch");
    const double h = bandwidth ? *bandwidth : detail::silverman_bandwidth(xs, z.step());
    std::vector<double> s0(z.size()), s00(z.size()), s1(z.size());
    for (std::size_t p = 0; p < xs.size(); ++p)
        detail::nw_weights(xs[p], z, mode, h, truncation, [&](std::size_t i, double w) {
            s0[i] += w;
            s00[i] += w * w;
            s1[i] += w * values[p];
        });
    std::vector<double> out(z.size(), 0.0), eff(z.size(), 0.0);
    std::vector<std::uint8_t> flag(z.size(), 0);
    for (std::size_t i = 0; i < z.size(); ++i) {
        eff[i] = s00[i] > 0.0 ? s0[i] * s0[i] / s00[i] : 0.0;
        if (s0[i] > 0.0) out[i] = s1[i] / s0[i];
    }
    std::vector<std::size_t> good;
    for (std::size_t i = 0; i < z.size(); ++i)
        if (eff[i] >= static_cast<double>(min_effective) && eff[i] > 0.0) good.push_back(i);
    if (good.empty()) throw NumericError("regression: no z cell has enough samples");
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (eff[i] >= static_cast<double>(min_effective) && eff[i] > 0.0) continue;
        std::size_t src = z.size();
        for (std::size_t dist = 1; src == z.size(); ++dist) {
            if (i >= dist && eff[i - dist] >= static_cast<double>(min_effective) && eff[i - dist] > 0.0) src = i - dist;
            else if (i + dist < z.size() && eff[i + dist] >= static_cast<double>(min_effective) && eff[i + dist] > 0.0)
                src = i + dist;
        }
        out[i] = out[src];
        flag[i] = 1;
    }
    if (filled) *filled = std::move(flag);
    if (effective) *effective = std::move(eff);
    return out;
}

} // namespace mproj
