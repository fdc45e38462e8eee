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
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

#include "mproj/core/error.hpp"

namespace mproj::numerics {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QuadratureOptions {
    double tolerance = 1e-10;  // relative
    unsigned max_depth = 18;
};

/// Adaptive Gauss-Kronrod (61 points) on [a, b]; either bound may be infinite.
template <class F>
double integrate(F&& f, double a, double b, const QuadratureOptions& opt = {})
{
    if (a == b) return 0.0;
    if (a > b) return -integrate(std::forward<F>(f), b, a, opt);
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        f, a, b, opt.max_depth, opt.tolerance, &err);
    if (!std::isfinite(v)) throw NumericError("quadrature returned a non-finite value");
    return v;
}

/// Adaptive Gauss-Kronrod over a set of breakpoints; integrands with jumps at
/// known locations converge much faster when split there.
template <class F>
double integrate_pieces(F&& f, std::initializer_list<double> points, const QuadratureOptions& opt = {})
{
    double total = 0.0;
    const double* p = points.begin();
    for (std::size_t i = 0; i + 1 < points.size(); ++i) total += integrate(f, p[i], p[i + 1], opt);
    return total;
}

/// Tanh-sinh on a finite interval; tolerates integrable endpoint singularities.
template <class F>
double integrate_singular(F&& f, double a, double b, double tolerance = 1e-12)
{
    if (a == b) return 0.0;
    boost::math::quadrature::tanh_sinh<double> ts;
    const double v = ts.integrate(f, a, b, tolerance);
    if (!std::isfinite(v)) throw NumericError("quadrature returned a non-finite value");
    return v;
}

struct RootOptions {
    double x_tolerance = 1e-13;
    std::uintmax_t max_iterations = 200;
};

/// Root of a monotone function g on [lo, hi] (TOMS 748). If the bracket
/// does not change sign it is expanded geometrically up to `max_expansions`
/// times before giving up.
template <class G>
double find_root(G&& g, double lo, double hi, const RootOptions& opt = {}, int max_expansions = 60)
{
    double glo = g(lo);
    double ghi = g(hi);
    int tries = 0;
    while (glo * ghi > 0.0 && tries < max_expansions) {
        const double width = hi - lo;
        lo -= width;
        hi += width;
        glo = g(lo);
        ghi = g(hi);
        ++tries;
    }
    if (glo == 0.0) return lo;
    if (ghi == 0.0) return hi;
    if (!(glo * ghi < 0.0)) throw NumericError("root finding: no sign change in bracket");
    std::uintmax_t iters = opt.max_iterations;
    auto tol = [&](double a, double b) { return std::abs(b - a) <= opt.x_tolerance * (1.0 + std::abs(a)); };
    const auto r = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi, tol, iters);
    return 0.5 * (r.first + r.second);
}

} // namespace mproj::numerics
