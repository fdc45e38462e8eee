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
#include <cstddef>
#include <vector>

#include "mproj/core/coefficients.hpp"
#include "mproj/core/density.hpp"
#include "mproj/numerics/statistics.hpp"
#include "support.hpp"

namespace mproj::test_support {

/// Coefficients constant in (t, z) with an optional jump kernel given as
/// masses per y-grid cell.
inline ProjectedCoefficients constant_coefficients(double b, double a, UniformGrid y = {},
                                                   const std::vector<double>& cell_mass = {})
{
    auto c = ProjectedCoefficients::zeros({0.0, 1.0}, UniformGrid::from_range(-1.0, 1.0, 2), y);
    for (std::size_t q = 0; q < c.b.size(); ++q) {
        c.b[q] = b;
        c.a[q] = a;
    }
    for (std::size_t k = 0; k < c.nt(); ++k)
        for (std::size_t i = 0; i < c.nz(); ++i) {
            auto row = c.kernel(k, i);
            for (std::size_t j = 0; j < c.ny(); ++j) row[j] = cell_mass[j] / y.step();
        }
    return c;
}

/// Random smooth-enough coefficients with a > 0 and a jump kernel that
/// partly reaches beyond the edges of a [-5, 5] state grid.
inline ProjectedCoefficients random_coefficients(Gen& g)
{
    auto c = ProjectedCoefficients::zeros({0.0, 0.5, 1.0}, UniformGrid::from_range(-4.0, 4.0, 9),
                                          UniformGrid::from_range(-2.0, 2.0, 9));
    c.jump_cutoff = g.uniform(0.0, 0.6);
    c.small_mode = g.uniform(0.0, 1.0) < 0.5 ? SmallJumpMode::drop : SmallJumpMode::gaussian;
    for (std::size_t q = 0; q < c.b.size(); ++q) {
        c.b[q] = g.uniform(-2.0, 2.0);
        c.a[q] = g.uniform(0.05, 2.0);
        c.tail_lo[q] = g.uniform(0.0, 0.3);
        c.tail_hi[q] = g.uniform(0.0, 0.3);
    }
    for (double& v : c.n) v = g.uniform(0.0, 1.0);
    return c;
}

/// L1 distance between a grid density and a pdf sampled at the nodes.
template <class Pdf>
double l1_to(const DensityField& d, std::size_t k, Pdf&& pdf)
{
    const auto r = d.row(k);
    double s = 0.0;
    for (std::size_t i = 0; i < d.nx(); ++i) s += std::abs(r[i] - pdf(d.x_grid.point(i)));
    return s * d.x_grid.step();
}

/// Compound Poisson with symmetric +-1 jumps of total rate lambda started
/// from p0: sum over the first `terms` jump counts of the Poisson weight
/// times the binomially shifted p0. p0 is a grid density whose nodes are
/// integer-spaced in shifts of 1.
inline std::vector<double> symmetric_unit_jump_series(const DensityField& p0, double lambda, double t,
                                                      std::size_t terms)
{
    const auto& g = p0.x_grid;
    const auto shift = static_cast<long>(std::lround(1.0 / g.step()));
    const auto base = p0.row(0);
    std::vector<double> out(g.size(), 0.0);
    double poisson = std::exp(-lambda * t);
    for (std::size_t k = 0; k < terms; ++k) {
        if (k > 0) poisson *= lambda * t / static_cast<double>(k);
        double binom = std::pow(0.5, static_cast<double>(k));
        for (std::size_t m = 0; m <= k; ++m) {
            if (m > 0) binom *= static_cast<double>(k - m + 1) / static_cast<double>(m);
            const long s = (2 * static_cast<long>(m) - static_cast<long>(k)) * shift;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const long src = static_cast<long>(i) - s;
                if (src >= 0 && src < static_cast<long>(g.size())) out[i] += poisson * binom * base[src];
            }
        }
    }
    return out;
}

} // namespace mproj::test_support
