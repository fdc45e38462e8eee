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
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "mproj/core/coefficients.hpp"
#include "mproj/core/error.hpp"
#include "mproj/core/grid.hpp"
#include "mproj/io/csv.hpp"
#include "mproj/numerics/statistics.hpp"

namespace mproj {

/// Marginal densities p[k][i] on a uniform x-grid at a list of times.
/// Discrete mass is sum_i p[k][i] * dx.
struct DensityField {
    UniformGrid x_grid;
    std::vector<double> times;
    std::vector<double> p;  // [k][i]

    std::size_t nt() const { return times.size(); }
    std::size_t nx() const { return x_grid.size(); }

    std::span<const double> row(std::size_t k) const { return {p.data() + k * nx(), nx()}; }
    std::span<double> row(std::size_t k) { return {p.data() + k * nx(), nx()}; }

    void push(double t, std::span<const double> values)
    {
        detail::require(values.size() == nx(), "density: row size mismatch");
        times.push_back(t);
        p.insert(p.end(), values.begin(), values.end());
    }

    double mass(std::size_t k) const
    {
        double s = 0.0;
        for (double v : row(k)) s += v;
        return s * x_grid.step();
    }

    double min(std::size_t k) const
    {
        const auto r = row(k);
        return *std::min_element(r.begin(), r.end());
    }

    /// Raw moments E[X^m], m = 1..4, of the discrete density.
    numerics::Moments moments(std::size_t k) const
    {
        numerics::Moments m{0.0, 0.0, 0.0, 0.0};
        const auto r = row(k);
        double total = 0.0;
        for (std::size_t i = 0; i < nx(); ++i) {
            const double x = x_grid.point(i);
            const double w = r[i];
            total += w;
            m[0] += w * x;
            m[1] += w * x * x;
            m[2] += w * x * x * x;
            m[3] += w * x * x * x * x;
        }
        for (double& v : m) v /= total;
        return m;
    }

    /// Index of the stored time closest to t.
    std::size_t nearest_time(double t) const
    {
        std::size_t best = 0;
        for (std::size_t k = 1; k < nt(); ++k)
            if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
        return best;
    }

    /// Cumulative trapezoid of row k at the grid nodes, normalised to end at 1.
    std::vector<double> cumulative(std::size_t k) const
    {
        const auto r = row(k);
        std::vector<double> c(nx(), 0.0);
        for (std::size_t i = 1; i < nx(); ++i)
            c[i] = c[i - 1] + 0.5 * (std::max(0.0, r[i - 1]) + std::max(0.0, r[i])) * x_grid.step();
        const double total = c.back();
        if (!(total > 0.0)) throw NumericError("density: row has no positive mass");
        for (double& v : c) v /= total;
        return c;
    }

    /// Piecewise-linear CDF built from `cumulative`.
    static double cdf_from(const UniformGrid& g, const std::vector<double>& c, double x)
    {
        if (x <= g.lo()) return 0.0;
        if (x >= g.hi()) return 1.0;
        return interpolate(c.data(), g.locate(x), g.size());
    }

    /// Inverse of the piecewise-linear CDF.
    static double quantile_from(const UniformGrid& g, const std::vector<double>& c, double u)
    {
        const auto it = std::lower_bound(c.begin(), c.end(), u);
        if (it == c.begin()) return g.lo();
        if (it == c.end()) return g.hi();
        const auto i = static_cast<std::size_t>(it - c.begin());
        const double span = c[i] - c[i - 1];
        const double frac = span > 0.0 ? (u - c[i - 1]) / span : 0.0;
        return g.point(i - 1) + frac * g.step();
    }

    /// Density on x_grid of N(mean, sd^2) sampled at the nodes and rescaled
    /// to unit discrete mass.
    static DensityField gaussian(const UniformGrid& g, double mean, double sd, double t = 0.0)
    {
        detail::require(sd > 0.0, "density: gaussian needs sd > 0");
        std::vector<double> v(g.size());
        double s = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            v[i] = numerics::normal_pdf(g.point(i), mean, sd);
            s += v[i];
        }
        detail::require(s > 0.0, "density: gaussian has no mass on the grid");
        for (double& x : v) x /= s * g.step();
        DensityField d;
        d.x_grid = g;
        d.push(t, v);
        return d;
    }

    /// Point mass at x0, split linearly between the two neighbouring nodes.
    static DensityField point_mass(const UniformGrid& g, double x0, double t = 0.0)
    {
        const auto loc = g.locate(x0);
        detail::require(!loc.clamped, "density: point mass outside the x grid");
        std::vector<double> v(g.size(), 0.0);
        v[loc.index] += (1.0 - loc.weight) / g.step();
        if (loc.weight > 0.0) v[loc.index + 1] += loc.weight / g.step();
        DensityField d;
        d.x_grid = g;
        d.push(t, v);
        return d;
    }

    void validate(double mass_tolerance = 1e-3, double negativity_tolerance = 1e-8) const
    {
        detail::require(nx() >= 2, "density: grid needs >= 2 nodes");
        detail::require(p.size() == nt() * nx(), "density: shape mismatch");
        for (std::size_t k = 0; k < nt(); ++k) {
            detail::require(std::abs(mass(k) - 1.0) <= mass_tolerance, "density: mass outside tolerance");
            detail::require(min(k) >= -negativity_tolerance, "density: negative values beyond tolerance");
        }
    }

    bool operator==(const DensityField&) const = default;
};

/// Writes density.csv (t,x,p) and density.json (grid) into `dir`.
inline void write_density(const DensityField& d, const std::string& dir)
{
    io::CsvWriter w(detail::join_path(dir, "density.csv"), {"t", "x", "p"});
    for (std::size_t k = 0; k < d.nt(); ++k)
        for (std::size_t i = 0; i < d.nx(); ++i) w.row({d.times[k], d.x_grid.point(i), d.row(k)[i]});
    w.close();
    std::ofstream os(detail::join_path(dir, "density.json"));
    os << nlohmann::json{{"x_grid", detail::grid_json(d.x_grid)}, {"times", d.times}}.dump(2) << '\n';
    if (!os) throw NumericError("cannot write density.json in " + dir);
}

inline DensityField read_density(const std::string& dir)
{
    std::ifstream is(detail::join_path(dir, "density.json"));
    if (!is) throw ConfigError("cannot open density.json in " + dir);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("density.json: ") + e.what());
    }
    DensityField d;
    d.x_grid = detail::grid_from_json(meta.at("x_grid"));
    d.times = meta.at("times").get<std::vector<double>>();
    const auto t = io::read_csv(detail::join_path(dir, "density.csv"));
    detail::require(t.rows.size() == d.nt() * d.nx(), "density.csv: row count does not match grid");
    const auto cp = t.column("p");
    d.p.resize(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) d.p[r] = t.rows[r][cp];
    return d;
}

} // namespace mproj
