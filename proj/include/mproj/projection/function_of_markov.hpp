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

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mproj/core/coefficients.hpp"
#include "mproj/core/error.hpp"
#include "mproj/core/levy.hpp"
#include "mproj/numerics/quadrature.hpp"

namespace mproj {

/// Conditioning Z in R^d (d <= 3) on the level set {f(Z) = w}. The last
/// coordinate is eliminated through F(z_1..z_{d-1}, w), the solution of
/// f(z_1..z_{d-1}, F) = w, found by root-finding unless `inverse` is given.
struct SliceProblem {
    std::size_t dim = 2;
    std::function<double(std::span<const double> z)> density;
    std::function<double(std::span<const double> z)> f;
    std::function<double(std::span<const double> z)> df_dlast;
    std::function<double(std::span<const double> head, double w)> inverse;
    std::vector<double> lo;  // integration box for z_1..z_{d-1}; empty = whole line
    std::vector<double> hi;
    double tolerance = 1e-8;
    double root_tolerance = 1e-10;

    void validate() const
    {
        detail::require(dim >= 1 && dim <= 3, "slice: dimension must be 1, 2 or 3");
        detail::require(density && f && df_dlast, "slice: density, f and df/dz_d are required");
        detail::require(lo.empty() || lo.size() + 1 == dim, "slice: box has wrong dimension");
        detail::require(lo.size() == hi.size(), "slice: box bounds mismatch");
    }
};

namespace detail {

class SliceEvaluator {
public:
    SliceEvaluator(const SliceProblem& p, double w) : p_(p), w_(w), z_(p.dim) {}

    /// Integral over z_1..z_{d-1} of g(z) q(z) / |df/dz_d(z)| on the slice.
    template <class G>
    double integrate(G&& g)
    {
        auto leaf = [&](std::span<const double> head) {
            std::copy(head.begin(), head.end(), z_.begin());
            const double F = solve(head);
            z_.back() = F;
            const double q = p_.density(z_);
            if (q == 0.0) return 0.0;
            const double df = p_.df_dlast(z_);
            check_sign(df);
            return g(std::span<const double>(z_)) * q / std::abs(df);
        };
        numerics::QuadratureOptions opt;
        opt.tolerance = p_.tolerance;
        if (p_.dim == 1) return leaf({});
        auto bound = [&](std::size_t i, bool upper) {
            if (p_.lo.empty()) return upper ? numerics::kInf : -numerics::kInf;
            return upper ? p_.hi[i] : p_.lo[i];
        };
        if (p_.dim == 2) {
            return numerics::integrate(
                [&](double z1) {
                    const double h[1] = {z1};
                    return leaf(h);
                },
                bound(0, false), bound(0, true), opt);
        }
        return numerics::integrate(
            [&](double z1) {
                return numerics::integrate(
                    [&](double z2) {
                        const double h[2] = {z1, z2};
                        return leaf(h);
                    },
                    bound(1, false), bound(1, true), opt);
            },
            bound(0, false), bound(0, true), opt);
    }

private:
    double solve(std::span<const double> head)
    {
        if (p_.inverse) return p_.inverse(head, w_);
        std::vector<double> z(p_.dim);
        std::copy(head.begin(), head.end(), z.begin());
        numerics::RootOptions ro;
        ro.x_tolerance = p_.root_tolerance;
        const double guess = last_root_;
        const double root = numerics::find_root(
            [&](double zd) {
                z.back() = zd;
                return p_.f(z) - w_;
            },
            guess - 1.0, guess + 1.0, ro);
        last_root_ = root;
        return root;
    }

    void check_sign(double df)
    {
        if (!(df != 0.0) || !std::isfinite(df))
            throw NumericError("slice: df/dz_d vanishes on the level set");
        const int s = df > 0.0 ? 1 : -1;
        if (sign_ == 0) sign_ = s;
        else if (s != sign_) throw NumericError("slice: df/dz_d changes sign on the level set");
    }

    const SliceProblem& p_;
    double w_;
    std::vector<double> z_;
    double last_root_ = 0.0;
    int sign_ = 0;
};

} // namespace detail

/// E[g(Z) | f(Z) = w]: the slice integral of g q / |df/dz_d| divided by the
/// same integral with g = 1.
inline double conditional_expectation_slice(const SliceProblem& p, const std::function<double(std::span<const double>)>& g,
                                            double w)
{
    p.validate();
    detail::SliceEvaluator ev(p, w);
    const double den = ev.integrate([](std::span<const double>) { return 1.0; });
    if (!(den >= 1e-300)) throw NumericError("slice: conditioning on a null event (w = " + std::to_string(w) + ")");
    const double num = ev.integrate(g);
    return num / den;
}

/// Z with Markov dynamics
///
///     dZ = b_Z dt + Sigma dW + int_{|psi|<=1} psi (N - nu dt)(dy) + int_{|psi|>1} psi N(dy),
///
/// observed through xi = f(Z). `density(t, z)` is the law of Z_t.
struct FunctionOfMarkovSpec {
    std::size_t dim = 2;
    std::size_t noise_dim = 2;
    std::function<void(double t, std::span<const double> z, std::span<double> out)> drift;
    std::function<void(double t, std::span<const double> z, std::span<double> out)> diffusion;  // d x n row-major
    std::optional<LevyDensitySpec> levy;
    std::function<void(double t, std::span<const double> z, std::span<const double> y, std::span<double> out)> amplitude;
    std::function<double(std::span<const double> z)> f;
    std::function<void(std::span<const double> z, std::span<double> out)> gradient;
    std::function<void(std::span<const double> z, std::span<double> out)> hessian;  // d x d row-major
    std::function<double(std::span<const double> head, double w)> inverse;
    std::function<double(double t, std::span<const double> z)> density;
    std::vector<double> lo;
    std::vector<double> hi;

    void validate() const
    {
        detail::require(dim >= 1 && dim <= 3, "function of Markov: dimension must be 1, 2 or 3");
        detail::require(drift && diffusion && f && gradient && hessian && density,
                        "function of Markov: drift, diffusion, f, gradient, hessian and density are required");
        if (levy) {
            levy->validate();
            detail::require(amplitude || levy->dimension() == dim, "function of Markov: jump dimension mismatch");
        }
    }
};

struct FunctionOfMarkovOptions {
    std::vector<double> times;
    UniformGrid w_grid;
    UniformGrid y_grid;
    double tolerance = 1e-8;
    double integrability_bound = std::numeric_limits<double>::infinity();
};

namespace detail {

class FunctionOfMarkovProjector {
public:
    explicit FunctionOfMarkovProjector(const FunctionOfMarkovSpec& s) : s_(s), grad_(s.dim), hess_(s.dim * s.dim) {}

    SliceProblem slice(double t, double tolerance) const
    {
        SliceProblem p;
        p.dim = s_.dim;
        p.density = [this, t](std::span<const double> z) { return s_.density(t, z); };
        p.f = s_.f;
        p.df_dlast = [this](std::span<const double> z) {
            std::vector<double> g(s_.dim);
            s_.gradient(z, g);
            return g.back();
        };
        p.inverse = s_.inverse;
        p.lo = s_.lo;
        p.hi = s_.hi;
        p.tolerance = tolerance;
        return p;
    }

    /// State jump of Z for mark y.
    void jump(double t, std::span<const double> z, std::span<const double> y, std::span<double> out) const
    {
        if (s_.amplitude) s_.amplitude(t, z, y, out);
        else std::copy(y.begin(), y.end(), out.begin());
    }

    struct Increment {
        double u = 0.0;
        double slack = 0.0;  // cancellation error bound of the difference
    };

    /// Increment f(z + psi) - f(z).
    Increment delta_f(double t, std::span<const double> z, std::span<const double> y) const
    {
        std::vector<double> j(s_.dim), zz(z.begin(), z.end());
        jump(t, z, y, j);
        for (std::size_t i = 0; i < s_.dim; ++i) zz[i] += j[i];
        const double after = s_.f(zz), before = s_.f(z);
        return {after - before, 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(after) + std::abs(before))};
    }

    /// Drift of xi = f(Z) with small-jump compensation at |u| <= 1.
    double beta(double t, std::span<const double> z)
    {
        const std::size_t d = s_.dim, n = s_.noise_dim;
        std::vector<double> bz(d), sig(d * n);
        s_.drift(t, z, bz);
        s_.diffusion(t, z, sig);
        s_.gradient(z, grad_);
        s_.hessian(z, hess_);
        double v = 0.0;
        for (std::size_t i = 0; i < d; ++i) v += grad_[i] * bz[i];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double cij = 0.0;
                for (std::size_t c = 0; c < n; ++c) cij += sig[i * n + c] * sig[j * n + c];
                v += 0.5 * hess_[i * d + j] * cij;
            }
        if (s_.levy) {
            const std::vector<double> g = grad_;
            v += s_.levy->integrate([&](std::span<const double> y) {
                std::vector<double> j(d), zz(z.begin(), z.end());
                jump(t, z, y, j);
                double gp = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    zz[i] += j[i];
                    gp += g[i] * j[i];
                }
                const double after = s_.f(zz), before = s_.f(z);
                const double u = after - before;
                const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(after) + std::abs(before));
                const double r = (std::abs(u) <= 1.0 + slack ? u : 0.0) - (LevyDensitySpec::norm2(j) <= 1.0 ? gp : 0.0);
                // pure cancellation noise stalls the relative-tolerance quadrature
                return std::abs(r) <= slack + 64.0 * std::numeric_limits<double>::epsilon() * std::abs(gp) ? 0.0 : r;
            });
        }
        return v;
    }

    /// |grad f . Sigma|^2.
    double a(double t, std::span<const double> z)
    {
        const std::size_t d = s_.dim, n = s_.noise_dim;
        std::vector<double> sig(d * n);
        s_.diffusion(t, z, sig);
        s_.gradient(z, grad_);
        double v = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += grad_[i] * sig[i * n + c];
            v += s * s;
        }
        return v;
    }

    /// nu({y : lo <= f(z + psi) - f(z) < hi, increment != 0}).
    double increment_mass(double t, std::span<const double> z, double lo, double hi) const
    {
        return s_.levy->integrate([&](std::span<const double> y) {
            const auto [u, slack] = delta_f(t, z, y);
            return (std::abs(u) > slack && u >= lo - slack && u < hi - slack) ? 1.0 : 0.0;
        });
    }

private:
    const FunctionOfMarkovSpec& s_;
    std::vector<double> grad_;
    std::vector<double> hess_;
};

} // namespace detail

/// Projected jump tail j(t, [u, inf), w) for u > 0, or j(t, (-inf, u], w)
/// for u < 0, normalised like conditional_expectation_slice.
inline double function_of_markov_jump_tail(const FunctionOfMarkovSpec& spec, double t, double w, double u,
                                           double tolerance = 1e-8)
{
    spec.validate();
    detail::require(u != 0.0, "function of Markov: jump tail needs u != 0");
    if (!spec.levy) return 0.0;
    detail::FunctionOfMarkovProjector pr(spec);
    const auto p = pr.slice(t, tolerance);
    const double inf = numerics::kInf;
    return conditional_expectation_slice(
        p,
        [&](std::span<const double> z) {
            return u > 0.0 ? pr.increment_mass(t, z, u, inf) : pr.increment_mass(t, z, -inf, std::nextafter(u, inf));
        },
        w);
}

/// Closed-form projection of xi = f(Z): drift, squared volatility and jump
/// kernel as normalised slice integrals over {f(Z_t) = w}. The jump kernel
/// is the cell-wise difference of the increment distribution on the y grid.
inline ProjectedCoefficients project_function_of_markov(const FunctionOfMarkovSpec& spec,
                                                        const FunctionOfMarkovOptions& opt)
{
    spec.validate();
    detail::require(!opt.times.empty() && opt.w_grid.size() >= 2, "function of Markov: empty output grids");
    const bool jumps = spec.levy.has_value() && opt.y_grid.size() > 0;
    auto c = ProjectedCoefficients::zeros(opt.times, opt.w_grid, jumps ? opt.y_grid : UniformGrid{});
    c.integrability_bound = opt.integrability_bound;
    detail::FunctionOfMarkovProjector pr(spec);
    const std::size_t ny = c.ny();
    const double inf = numerics::kInf;
    for (std::size_t k = 0; k < c.nt(); ++k) {
        const double t = opt.times[k];
        const auto p = pr.slice(t, opt.tolerance);
        for (std::size_t i = 0; i < c.nz(); ++i) {
            const double w = opt.w_grid.point(i);
            detail::SliceEvaluator ev(p, w);
            const double den = ev.integrate([](std::span<const double>) { return 1.0; });
            if (!(den >= 1e-300))
                throw NumericError("function of Markov: conditioning on a null event at t = " + std::to_string(t) +
                                   ", w = " + std::to_string(w));
            const std::size_t cell = c.cell(k, i);
            c.b[cell] = ev.integrate([&](std::span<const double> z) { return pr.beta(t, z); }) / den;
            c.a[cell] = std::max(0.0, ev.integrate([&](std::span<const double> z) { return pr.a(t, z); }) / den);
            if (!jumps) continue;
            const double dy = c.y_grid.step();
            auto row = c.kernel(k, i);
            for (std::size_t j = 0; j < ny; ++j) {
                const double lo = c.y_grid.point(j) - 0.5 * dy;
                const double hi = c.y_grid.point(j) + 0.5 * dy;
                const double m =
                    ev.integrate([&](std::span<const double> z) { return pr.increment_mass(t, z, lo, hi); }) / den;
                row[j] = std::max(0.0, m) / dy;
            }
            const double edge_lo = c.y_grid.lo() - 0.5 * dy;
            const double edge_hi = c.y_grid.hi() + 0.5 * dy;
            c.tail_lo[cell] =
                ev.integrate([&](std::span<const double> z) { return pr.increment_mass(t, z, -inf, edge_lo); }) / den;
            c.tail_hi[cell] =
                ev.integrate([&](std::span<const double> z) { return pr.increment_mass(t, z, edge_hi, inf); }) / den;
        }
    }
    c.validate();
    return c;
}

} // namespace mproj
