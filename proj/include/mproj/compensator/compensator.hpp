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
#include <span>
#include <string>
#include <vector>

#include "mproj/core/error.hpp"
#include "mproj/core/levy.hpp"
#include "mproj/core/rng.hpp"
#include "mproj/numerics/quadrature.hpp"

namespace mproj {

/// Jump amplitude psi: R -> R at a frozen (t, history), with optional
/// closed-form inverse and derivative.
struct AmplitudeMap {
    std::function<double(double)> psi;
    std::function<double(double)> inverse;     // finds z with psi(z) = y; root-finding when empty
    std::function<double(double)> derivative;  // central differences when empty
    double domain_lo = -60.0;                  // working domain for the monotonicity check and the image
    double domain_hi = 60.0;
    std::size_t samples = 4001;

    static AmplitudeMap identity()
    {
        return {[](double z) { return z; }, [](double y) { return y; }, [](double) { return 1.0; }};
    }
};

/// Change-of-variables density of the jump compensator of psi(Y), Y ~ nu:
///
///     m(y) = 1{y in psi(R)} |psi'(phi(y))|^-1 nu(phi(y)),   phi = psi^-1.
///
/// The image psi(R) is approximated by the interval between the extreme
/// sampled values of psi on the working domain.
class PushforwardDensity {
public:
    PushforwardDensity(AmplitudeMap map, std::function<double(double)> nu) : map_(std::move(map)), nu_(std::move(nu))
    {
        detail::require(static_cast<bool>(map_.psi), "pushforward: missing amplitude map");
        detail::require(static_cast<bool>(nu_), "pushforward: missing Levy density");
        detail::require(map_.domain_hi > map_.domain_lo && map_.samples >= 3, "pushforward: invalid working domain");
        double prev = map_.psi(map_.domain_lo);
        double lo = prev, hi = prev;
        int sign = 0;
        for (std::size_t s = 1; s < map_.samples; ++s) {
            const double z = map_.domain_lo + (map_.domain_hi - map_.domain_lo) * static_cast<double>(s) /
                                                  static_cast<double>(map_.samples - 1);
            const double v = map_.psi(z);
            if (!std::isfinite(v)) throw NumericError("pushforward: psi is not finite at z = " + std::to_string(z));
            const int sg = (v > prev) - (v < prev);
            if (sg == 0 || (sign != 0 && sg != sign))
                throw ConfigError("pushforward: psi is not strictly monotone near z = " + std::to_string(z));
            sign = sg;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            prev = v;
        }
        image_lo_ = lo;
        image_hi_ = hi;
        increasing_ = sign > 0;
    }

    double image_lo() const { return image_lo_; }
    double image_hi() const { return image_hi_; }
    bool increasing() const { return increasing_; }

    /// phi(y) for y inside the image.
    double preimage(double y) const
    {
        if (map_.inverse) return map_.inverse(y);
        numerics::RootOptions ro;
        ro.x_tolerance = 1e-15;
        return numerics::find_root([&](double z) { return map_.psi(z) - y; }, map_.domain_lo, map_.domain_hi, ro, 0);
    }

    double jacobian(double z) const
    {
        if (map_.derivative) return map_.derivative(z);
        const double h = 1e-6 * (1.0 + std::abs(z));
        return (map_.psi(z + h) - map_.psi(z - h)) / (2.0 * h);
    }

    double operator()(double y) const
    {
        detail::require(y != 0.0, "pushforward: density is not defined at y = 0");
        if (y < image_lo_ || y > image_hi_) return 0.0;
        const double z = preimage(y);
        const double j = std::abs(jacobian(z));
        if (!(j > 0.0)) throw NumericError("pushforward: vanishing Jacobian at z = " + std::to_string(z));
        return nu_(z) / j;
    }

private:
    AmplitudeMap map_;
    std::function<double(double)> nu_;
    double image_lo_ = 0.0;
    double image_hi_ = 0.0;
    bool increasing_ = true;
};

/// d-dimensional version with user-supplied inverse and Jacobian determinant.
/// `inverse` returns false when y lies outside the image of psi.
inline double pushforward_density(const std::function<bool(std::span<const double> y, std::span<double> z)>& inverse,
                                  const std::function<double(std::span<const double> z)>& jacobian_det,
                                  const std::function<double(std::span<const double> z)>& nu,
                                  std::span<const double> y)
{
    bool nonzero = false;
    for (double v : y) nonzero = nonzero || v != 0.0;
    detail::require(nonzero, "pushforward: density is not defined at y = 0");
    std::vector<double> z(y.size());
    if (!inverse(y, z)) return 0.0;
    const double j = std::abs(jacobian_det(z));
    if (!(j > 0.0)) throw NumericError("pushforward: vanishing Jacobian determinant");
    return nu(z) / j;
}

struct MassEstimate {
    double mass = 0.0;
    double standard_error = 0.0;
};

/// Monte Carlo estimate of nu(psi^-1([a, b])) from n_mc draws of the
/// normalised simulated part of nu. For infinite-activity measures the set
/// must not be reachable from jumps below the cutoff.
inline MassEstimate pushforward_set_mass(const std::function<double(double)>& psi, const LevyDensitySpec& nu, double a,
                                         double b, std::size_t n_mc, std::uint64_t seed)
{
    nu.validate();
    detail::require(nu.dimension() == 1, "pushforward: set mass is implemented for d = 1");
    detail::require(b > a, "pushforward: empty interval");
    detail::require(n_mc >= 2, "pushforward: n_mc must be >= 2");
    detail::require(a > 0.0 || b < 0.0 || nu.is_finite_activity(),
                    "pushforward: interval touches 0 with an infinite-activity measure");
    if (!nu.is_finite_activity()) {
        const auto& v = nu.variant();
        const double cutoff = std::holds_alternative<InfiniteActivity>(v) ? std::get<InfiniteActivity>(v).cutoff
                                                                           : std::get<StableTail>(v).cutoff;
        const double gap = a > 0.0 ? a : -b;
        double reach = 0.0;
        for (int s = -200; s <= 200; ++s) reach = std::max(reach, std::abs(psi(cutoff * s / 200.0)));
        detail::require(reach < gap, "pushforward: interval reachable by jumps below the simulation cutoff");
    }
    const double total = nu.large_intensity();
    if (!(total > 0.0)) return {};
    StreamRng rng = StreamRng::for_stream(seed, 0);
    double y = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        nu.sample_large(rng, std::span<double>(&y, 1));
        const double v = psi(y);
        if (v >= a && v <= b) ++hits;
    }
    const double p = static_cast<double>(hits) / static_cast<double>(n_mc);
    return {total * p, total * std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n_mc))};
}

/// Integral of a pushforward density over [a, b] (a, b of the same sign).
inline double integrate_pushforward(const PushforwardDensity& m, double a, double b)
{
    detail::require(b > a && (a >= 0.0 || b <= 0.0), "pushforward: interval must not straddle 0");
    const double lo = std::max(a, m.image_lo());
    const double hi = std::min(b, m.image_hi());
    if (!(hi > lo)) return 0.0;
    // the finite-difference Jacobian carries ~1e-10 relative round-off, so a
    // tighter tolerance only drives the bisection to full depth
    numerics::QuadratureOptions q;
    q.tolerance = 1e-9;
    q.max_depth = 10;
    return numerics::integrate([&](double y) { return y == 0.0 ? 0.0 : m(y); }, lo, hi, q);
}

} // namespace mproj
