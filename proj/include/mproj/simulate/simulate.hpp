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
#include <span>
#include <string>
#include <vector>

#include "mproj/core/coefficients.hpp"
#include "mproj/core/ensemble.hpp"
#include "mproj/core/error.hpp"
#include "mproj/core/grid.hpp"
#include "mproj/core/model.hpp"
#include "mproj/core/parallel.hpp"
#include "mproj/core/rng.hpp"

namespace mproj {

struct SimulationOptions {
    std::size_t record_stride = 1;  // steps 0, s, 2s, ... and the final step are stored
    bool record_characteristics = true;
    bool record_aux = true;
    unsigned threads = 1;
};

namespace detail {

inline std::vector<std::size_t> recorded_steps(std::size_t n_steps, std::size_t stride)
{
    require(stride >= 1, "simulation: record stride must be >= 1");
    std::vector<std::size_t> ks;
    for (std::size_t k = 0; k < n_steps; k += stride) ks.push_back(k);
    ks.push_back(n_steps);
    return ks;
}

inline void check_finite(std::span<const double> v, const char* what, std::size_t path, std::size_t step)
{
    for (double x : v)
        if (!std::isfinite(x))
            throw NumericError(std::string("simulation: non-finite ") + what + " at path " + std::to_string(path) +
                               ", step " + std::to_string(step));
}

/// Per-path jump marks, merged in path order after the parallel section.
struct JumpBuffer {
    std::vector<std::uint32_t> steps;
    std::vector<double> sizes;
};

inline void merge_jumps(PathEnsemble& e, std::vector<JumpBuffer>& buffers)
{
    e.jump_offsets.assign(1, 0);
    std::size_t total = 0;
    for (const auto& b : buffers) total += b.steps.size();
    e.jump_steps.reserve(total);
    e.jump_sizes.reserve(total * e.dim);
    for (auto& b : buffers) {
        e.jump_steps.insert(e.jump_steps.end(), b.steps.begin(), b.steps.end());
        e.jump_sizes.insert(e.jump_sizes.end(), b.sizes.begin(), b.sizes.end());
        e.jump_offsets.push_back(e.jump_steps.size());
        b = {};
    }
}

inline void draw_initial(const InitialLaw& law, StreamRng& rng, std::span<double> x)
{
    if (law.is_point_mass()) std::copy(law.point.begin(), law.point.end(), x.begin());
    else law.sampler(rng, x);
}

/// Drift correction -dt * int_{simulated, |psi| <= 1} psi nu(dy) for identity psi.
inline std::vector<double> identity_compensation(const LevyDensitySpec& levy, std::size_t d)
{
    std::vector<double> c(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        c[i] = levy.integrate_large([i](std::span<const double> y) {
            return LevyDensitySpec::norm2(y) <= 1.0 ? y[i] : 0.0;
        });
    return c;
}

/// Jump machinery of one PoissonDriven model, shared read-only by all paths.
class PoissonStepper {
public:
    PoissonStepper(const PoissonDriven& pd, std::size_t dim) : pd_(pd), dim_(dim), ydim_(pd.levy.dimension())
    {
        if (!pd_.amplitude) {
            comp_ = identity_compensation(pd_.levy, dim_);
            small_var_ = pd_.levy.small_jump_variance();
        }
    }

    std::size_t levy_dim() const { return ydim_; }

    /// Adds the compensator drift and the small-jump Gaussian to dx, then
    /// samples the large jumps of one step, passing each state jump to on_jump.
    template <class OnJump>
    void step(double t, const History& h, double dt, StreamRng& rng, std::span<double> dx, std::span<double> y,
              std::span<double> jump, std::size_t path, std::size_t k, OnJump&& on_jump) const
    {
        double rate = 1.0;
        if (pd_.rate_scale) {
            rate = pd_.rate_scale(t, h);
            if (!(std::isfinite(rate) && rate > 0.0))
                throw NumericError("simulation: jump rate scale must be finite and > 0 (path " + std::to_string(path) +
                                   ", step " + std::to_string(k) + ")");
        }
        if (!pd_.amplitude) {
            for (std::size_t i = 0; i < dim_; ++i) dx[i] -= dt * rate * comp_[i];
            if (small_var_ > 0.0) dx[0] += std::sqrt(small_var_ * rate * dt) * rng.normal();
        } else {
            for (std::size_t i = 0; i < dim_; ++i) {
                auto g = [&](std::span<const double> yy) {
                    std::vector<double> out(dim_);
                    pd_.amplitude(t, h, yy, out);
                    return LevyDensitySpec::norm2(out) <= 1.0 ? out[i] : 0.0;
                };
                dx[i] -= dt * rate * pd_.levy.integrate_large(g);
            }
            const double v = amplitude_small_variance(t, h);
            if (v > 0.0) dx[0] += std::sqrt(v * rate * dt) * rng.normal();
        }
        const double lambda = pd_.levy.large_intensity() * rate;
        if (!(lambda > 0.0)) return;
        const auto count = rng.poisson(lambda * dt);
        for (std::uint64_t c = 0; c < count; ++c) {
            pd_.levy.sample_large(rng, y);
            if (pd_.amplitude) pd_.amplitude(t, h, y, jump);
            else std::copy(y.begin(), y.end(), jump.begin());
            check_finite(jump, "jump", path, k);
            on_jump(jump);
        }
    }

private:
    double amplitude_small_variance(double t, const History& h) const
    {
        double cutoff = 0.0;
        SmallJumpMode mode = SmallJumpMode::drop;
        const auto& v = pd_.levy.variant();
        if (const auto* ia = std::get_if<InfiniteActivity>(&v)) {
            cutoff = ia->cutoff;
            mode = ia->mode;
        } else if (const auto* st = std::get_if<StableTail>(&v)) {
            cutoff = st->cutoff;
            mode = st->mode;
        }
        if (mode != SmallJumpMode::gaussian || cutoff <= 0.0) return 0.0;
        double out = 0.0;
        auto f = [&](double yv) {
            const double dens = pd_.levy.density(yv);
            if (dens == 0.0) return 0.0;
            pd_.amplitude(t, h, std::span<const double>(&yv, 1), std::span<double>(&out, 1));
            return out * out * dens;
        };
        return numerics::integrate_singular(f, -cutoff, 0.0) + numerics::integrate_singular(f, 0.0, cutoff);
    }

    const PoissonDriven& pd_;
    std::size_t dim_;
    std::size_t ydim_;
    std::vector<double> comp_;
    double small_var_ = 0.0;
};

} // namespace detail

/// Euler-Maruyama simulation of an Ito semimartingale with Poisson or
/// compensator-specified jumps.
///
/// Path p uses the stream StreamRng::for_stream(seed, p) and consumes it in
/// a fixed order (initial law, then per step: n normals, the small-jump
/// normal if any, the jump count, the jump sizes), so the ensemble does not
/// depend on the thread count.
inline PathEnsemble simulate_ito(const ItoModel& model, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                 const SimulationOptions& opt = {})
{
    model.validate();
    detail::require(n_paths >= 1, "simulation: n_paths must be >= 1");
    const std::size_t d = model.dim;
    const std::size_t nn = model.noise_dim;
    const std::size_t na = model.aux_dim;
    const std::size_t N = grid.n_steps();
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);

    PathEnsemble e;
    e.grid = grid;
    e.seed = seed;
    e.dim = d;
    e.n_paths = n_paths;
    e.aux_dim = na;
    e.recorded_steps = detail::recorded_steps(N, opt.record_stride);
    const std::size_t nr = e.n_recorded();
    e.values.assign(n_paths * nr * d, 0.0);
    if (opt.record_characteristics) {
        e.drift.assign(n_paths * nr * d, 0.0);
        e.diffusion_sq.assign(n_paths * nr * d * d, 0.0);
    }
    if (opt.record_aux && na > 0) e.aux.assign(n_paths * nr * na, 0.0);

    const auto* poisson = std::get_if<PoissonDriven>(&model.jumps);
    const auto* direct = std::get_if<CompensatorDirect>(&model.jumps);
    std::optional<detail::PoissonStepper> stepper;
    if (poisson) stepper.emplace(*poisson, d);
    std::size_t ny = 0;
    if (direct) {
        ny = direct->y_grid.size();
        e.compensator_grid = direct->y_grid;
        e.compensator.assign(n_paths * nr * ny, 0.0);
    }

    std::vector<detail::JumpBuffer> jumps(n_paths);

    parallel_for(n_paths, opt.threads, [&](std::size_t begin, std::size_t end) {
        std::vector<double> x(d), xn(d), aux(na), beta(d), delta(d * nn), g(nn), dx(d), jump(d);
        std::vector<double> y(stepper ? stepper->levy_dim() : 1);
        std::vector<double> mrow(ny), mcdf(ny);
        for (std::size_t p = begin; p < end; ++p) {
            StreamRng rng = StreamRng::for_stream(seed, p);
            detail::draw_initial(model.initial, rng, x);
            detail::check_finite(x, "initial state", p, 0);
            if (na > 0) model.aux_init(x, aux);
            auto& jb = jumps[p];
            std::size_t r = 0;
            for (std::size_t k = 0; k <= N; ++k) {
                const double t = grid.time(k);
                const History h{x, aux};
                const bool rec = r < nr && e.recorded_steps[r] == k;
                if (k == N && !rec) break;
                model.drift(t, h, beta);
                model.diffusion(t, h, delta);
                detail::check_finite(beta, "drift", p, k);
                detail::check_finite(delta, "diffusion", p, k);
                if (direct) {
                    for (std::size_t j = 0; j < ny; ++j) {
                        mrow[j] = direct->density(t, h, direct->y_grid.point(j));
                        if (!(std::isfinite(mrow[j]) && mrow[j] >= 0.0))
                            throw NumericError("simulation: compensator density must be finite and >= 0 at path " +
                                               std::to_string(p) + ", step " + std::to_string(k));
                    }
                }
                if (rec) {
                    const std::size_t cell = p * nr + r;
                    std::copy(x.begin(), x.end(), e.values.begin() + static_cast<std::ptrdiff_t>(cell * d));
                    if (opt.record_characteristics) {
                        std::copy(beta.begin(), beta.end(), e.drift.begin() + static_cast<std::ptrdiff_t>(cell * d));
                        double* s = e.diffusion_sq.data() + cell * d * d;
                        for (std::size_t i = 0; i < d; ++i)
                            for (std::size_t j = 0; j < d; ++j) {
                                double v = 0.0;
                                for (std::size_t c = 0; c < nn; ++c) v += delta[i * nn + c] * delta[j * nn + c];
                                s[i * d + j] = v;
                            }
                    }
                    if (!e.aux.empty())
                        std::copy(aux.begin(), aux.end(), e.aux.begin() + static_cast<std::ptrdiff_t>(cell * na));
                    if (direct)
                        std::copy(mrow.begin(), mrow.end(),
                                  e.compensator.begin() + static_cast<std::ptrdiff_t>(cell * ny));
                    ++r;
                }
                if (k == N) break;

                for (std::size_t c = 0; c < nn; ++c) g[c] = rng.normal();
                for (std::size_t i = 0; i < d; ++i) {
                    double v = beta[i] * dt;
                    for (std::size_t c = 0; c < nn; ++c) v += delta[i * nn + c] * g[c] * sdt;
                    dx[i] = v;
                }
                auto record_jump = [&](std::span<const double> jmp) {
                    for (std::size_t i = 0; i < d; ++i) dx[i] += jmp[i];
                    jb.steps.push_back(static_cast<std::uint32_t>(k));
                    jb.sizes.insert(jb.sizes.end(), jmp.begin(), jmp.end());
                };
                if (stepper) {
                    stepper->step(t, h, dt, rng, dx, y, jump, p, k, record_jump);
                } else if (direct) {
                    const double dy = direct->y_grid.step();
                    double total = 0.0;
                    for (std::size_t j = 0; j < ny; ++j) {
                        const double yj = direct->y_grid.point(j);
                        const double w = mrow[j] * dy;
                        if (std::abs(yj) <= 1.0) dx[0] -= dt * yj * w;
                        total += w;
                        mcdf[j] = total;
                    }
                    const auto count = total > 0.0 ? rng.poisson(total * dt) : 0;
                    for (std::uint64_t c = 0; c < count; ++c) {
                        const double u = rng.uniform() * total;
                        auto it = std::upper_bound(mcdf.begin(), mcdf.end(), u);
                        const auto j = std::min<std::size_t>(static_cast<std::size_t>(it - mcdf.begin()), ny - 1);
                        jump[0] = direct->y_grid.point(j);
                        record_jump(jump);
                    }
                }
                for (std::size_t i = 0; i < d; ++i) xn[i] = x[i] + dx[i];
                detail::check_finite(xn, "state", p, k + 1);
                if (model.step_hook) model.step_hook(StepContext{t, dt, x, xn, g, &rng}, aux);
                x.swap(xn);
            }
        }
    });
    detail::merge_jumps(e, jumps);
    return e;
}

struct ProjectedSimulationOptions {
    std::size_t record_stride = 1;
    bool record_characteristics = false;
    unsigned threads = 1;
};

struct ProjectedSimulationStats {
    std::uint64_t edge_excursions = 0;  // steps started outside the z grid
    std::uint64_t tail_jumps = 0;       // jumps drawn from the lumped tail masses
    double max_lambda_dt = 0.0;
    std::vector<std::string> warnings;
};

/// Euler simulation of the mimicking Markov SDE driven by gridded
/// coefficients: drift b, volatility sqrt(a), jumps by thinning against the
/// largest intensity on the grid at each step. Coefficients are linear in
/// both t and z and frozen at their nearest edge outside the grids.
inline PathEnsemble simulate_projected(const ProjectedCoefficients& coeffs, const InitialLaw& initial,
                                       const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                       const ProjectedSimulationOptions& opt = {},
                                       ProjectedSimulationStats* stats = nullptr)
{
    coeffs.validate();
    detail::require(n_paths >= 1, "simulation: n_paths must be >= 1");
    detail::require(initial.is_point_mass() ? initial.point.size() == 1 : true,
                    "simulation: projected coefficients are one-dimensional");
    const std::size_t nz = coeffs.nz();
    const std::size_t ny = coeffs.ny();
    const std::size_t cells = coeffs.nt() * nz;
    const double dy = ny ? coeffs.y_grid.step() : 0.0;
    const double eps = coeffs.jump_cutoff;

    // Per-cell effective drift, variance and intensity; all linear in n, so
    // interpolating them equals using the interpolated kernel.
    std::vector<double> b_eff(coeffs.b), a_eff(coeffs.a), lambda(cells, 0.0);
    if (ny) {
        const double lo_edge = coeffs.y_grid.lo();
        const double hi_edge = coeffs.y_grid.hi();
        for (std::size_t c = 0; c < cells; ++c) {
            const double* row = coeffs.n.data() + c * ny;
            double comp = 0.0, var = 0.0, lam = coeffs.tail_lo[c] + coeffs.tail_hi[c];
            for (std::size_t j = 0; j < ny; ++j) {
                const double yj = coeffs.y_grid.point(j);
                const double w = row[j] * dy;
                if (std::abs(yj) <= eps) {
                    if (coeffs.small_mode == SmallJumpMode::gaussian) var += yj * yj * w;
                    continue;
                }
                lam += w;
                if (std::abs(yj) <= 1.0) comp += yj * w;
            }
            if (std::abs(lo_edge) <= 1.0) comp += lo_edge * coeffs.tail_lo[c];
            if (std::abs(hi_edge) <= 1.0) comp += hi_edge * coeffs.tail_hi[c];
            b_eff[c] -= comp;
            a_eff[c] += var;
            lambda[c] = lam;
        }
    }

    const std::size_t N = grid.n_steps();
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    std::vector<TimeLocation> tloc(N + 1);
    std::vector<double> lambda_max(N + 1, 0.0);
    for (std::size_t k = 0; k <= N; ++k) {
        tloc[k] = locate_time(coeffs.times, grid.time(k));
        if (!ny) continue;
        const auto& tl = tloc[k];
        const std::size_t k1 = std::min(tl.index + 1, coeffs.nt() - 1);
        double m = 0.0;
        for (std::size_t i = 0; i < nz; ++i)
            m = std::max(m, (1.0 - tl.weight) * lambda[tl.index * nz + i] + tl.weight * lambda[k1 * nz + i]);
        lambda_max[k] = m;
    }
    ProjectedSimulationStats local;
    for (std::size_t k = 0; k < N; ++k) local.max_lambda_dt = std::max(local.max_lambda_dt, lambda_max[k] * dt);
    if (local.max_lambda_dt > 0.5)
        local.warnings.push_back("thinning: max intensity * dt = " + std::to_string(local.max_lambda_dt) +
                                 " exceeds 0.5; jump timing is coarse");

    auto field = [&](const std::vector<double>& f, const TimeLocation& tl, const GridLocation& zl) {
        const std::size_t k1 = std::min(tl.index + 1, coeffs.nt() - 1);
        const double* r0 = f.data() + tl.index * nz;
        const double* r1 = f.data() + k1 * nz;
        return (1.0 - tl.weight) * interpolate(r0, zl, nz) + tl.weight * interpolate(r1, zl, nz);
    };

    PathEnsemble e;
    e.grid = grid;
    e.seed = seed;
    e.dim = 1;
    e.n_paths = n_paths;
    e.recorded_steps = detail::recorded_steps(N, opt.record_stride);
    const std::size_t nr = e.n_recorded();
    e.values.assign(n_paths * nr, 0.0);
    if (opt.record_characteristics) {
        e.drift.assign(n_paths * nr, 0.0);
        e.diffusion_sq.assign(n_paths * nr, 0.0);
    }
    std::vector<detail::JumpBuffer> jumps(n_paths);
    std::vector<std::uint64_t> excursions(n_paths, 0), tails(n_paths, 0);

    parallel_for(n_paths, opt.threads, [&](std::size_t begin, std::size_t end) {
        std::vector<double> row(ny), cdf(ny + 2);
        for (std::size_t p = begin; p < end; ++p) {
            StreamRng rng = StreamRng::for_stream(seed, p);
            double x = 0.0;
            detail::draw_initial(initial, rng, std::span<double>(&x, 1));
            auto& jb = jumps[p];
            std::size_t r = 0;
            for (std::size_t k = 0; k <= N; ++k) {
                const auto& tl = tloc[k];
                const GridLocation zl = coeffs.z_grid.locate(x);
                const double bk = field(b_eff, tl, zl);
                const double ak = field(a_eff, tl, zl);
                if (ak < 0.0)
                    throw NumericError("simulation: negative interpolated a at path " + std::to_string(p) +
                                       ", step " + std::to_string(k));
                if (r < nr && e.recorded_steps[r] == k) {
                    e.values[p * nr + r] = x;
                    if (opt.record_characteristics) {
                        e.drift[p * nr + r] = field(coeffs.b, tl, zl);
                        e.diffusion_sq[p * nr + r] = ak;
                    }
                    ++r;
                }
                if (k == N) break;
                if (zl.clamped) ++excursions[p];
                double xn = x + bk * dt + std::sqrt(ak) * sdt * rng.normal();
                if (ny && lambda_max[k] > 0.0) {
                    const double lam = field(lambda, tl, zl);
                    const auto candidates = rng.poisson(lambda_max[k] * dt);
                    bool row_ready = false;
                    double tlo = 0.0, thi = 0.0;
                    for (std::uint64_t c = 0; c < candidates; ++c) {
                        if (!(rng.uniform() * lambda_max[k] < lam)) continue;
                        if (!row_ready) {
                            coeffs.kernel_at(tl, x, row, tlo, thi);
                            double acc = tlo;
                            cdf[0] = acc;
                            for (std::size_t j = 0; j < ny; ++j) {
                                if (std::abs(coeffs.y_grid.point(j)) > eps) acc += row[j] * dy;
                                cdf[j + 1] = acc;
                            }
                            cdf[ny + 1] = acc + thi;
                            row_ready = true;
                        }
                        const double u = rng.uniform() * cdf[ny + 1];
                        const auto pos = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
                        double yv;
                        if (pos == 0) {
                            yv = coeffs.y_grid.lo();
                            ++tails[p];
                        } else if (pos >= ny + 1) {
                            yv = coeffs.y_grid.hi();
                            ++tails[p];
                        } else {
                            yv = coeffs.y_grid.point(pos - 1);
                        }
                        xn += yv;
                        jb.steps.push_back(static_cast<std::uint32_t>(k));
                        jb.sizes.push_back(yv);
                    }
                }
                if (!std::isfinite(xn))
                    throw NumericError("simulation: non-finite state at path " + std::to_string(p) + ", step " +
                                       std::to_string(k + 1));
                x = xn;
            }
        }
    });
    detail::merge_jumps(e, jumps);
    for (std::size_t p = 0; p < n_paths; ++p) {
        local.edge_excursions += excursions[p];
        local.tail_jumps += tails[p];
    }
    if (stats) *stats = std::move(local);
    return e;
}

} // namespace mproj
