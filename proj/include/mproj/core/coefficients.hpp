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
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "mproj/core/error.hpp"
#include "mproj/core/grid.hpp"
#include "mproj/core/levy.hpp"
#include "mproj/io/csv.hpp"

namespace mproj {

/// Position between two entries of an increasing list of times.
struct TimeLocation {
    std::size_t index = 0;
    double weight = 0.0;  // value = (1 - w) * v[index] + w * v[index + 1]
};

inline TimeLocation locate_time(const std::vector<double>& times, double t)
{
    if (times.size() <= 1 || t <= times.front()) return {0, 0.0};
    if (t >= times.back()) return {times.size() - 2, 1.0};
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const auto k = static_cast<std::size_t>(it - times.begin()) - 1;
    return {k, (t - times[k]) / (times[k + 1] - times[k])};
}

/// Gridded Markovian projection (b, a, n) on times {t_k} x states {z_i}.
///
/// The jump kernel is a density on the y-grid (nodes are centres of cells
/// of width dy) plus the mass beyond each edge of that grid. Jumps with
/// |y| <= jump_cutoff are not represented as jumps; with
/// SmallJumpMode::gaussian their second moment is added to a wherever the
/// kernel is used for simulation.
struct ProjectedCoefficients {
    std::vector<double> times;
    UniformGrid z_grid;
    UniformGrid y_grid;  // size 0 when there are no jumps

    std::vector<double> b;        // [k][i]
    std::vector<double> a;        // [k][i]
    std::vector<double> n;        // [k][i][j]
    std::vector<double> tail_lo;  // [k][i], mass below the first y cell
    std::vector<double> tail_hi;  // [k][i], mass above the last y cell
    std::vector<std::uint8_t> filled;  // [k][i], 1 where a neighbour's estimate was copied in

    double jump_cutoff = 0.0;
    SmallJumpMode small_mode = SmallJumpMode::drop;
    double integrability_bound = std::numeric_limits<double>::infinity();

    std::size_t nt() const { return times.size(); }
    std::size_t nz() const { return z_grid.size(); }
    std::size_t ny() const { return y_grid.size(); }
    bool has_jumps() const { return ny() > 0; }

    std::size_t cell(std::size_t k, std::size_t i) const { return k * nz() + i; }
    double sigma(std::size_t k, std::size_t i) const { return std::sqrt(a[cell(k, i)]); }
    std::span<const double> kernel(std::size_t k, std::size_t i) const { return {n.data() + cell(k, i) * ny(), ny()}; }
    std::span<double> kernel(std::size_t k, std::size_t i) { return {n.data() + cell(k, i) * ny(), ny()}; }

    /// Allocate zero fields.
    static ProjectedCoefficients zeros(std::vector<double> times, UniformGrid z, UniformGrid y = {})
    {
        ProjectedCoefficients c;
        c.times = std::move(times);
        c.z_grid = z;
        c.y_grid = y;
        const std::size_t cells = c.nt() * c.nz();
        c.b.assign(cells, 0.0);
        c.a.assign(cells, 0.0);
        c.n.assign(cells * c.ny(), 0.0);
        c.tail_lo.assign(cells, 0.0);
        c.tail_hi.assign(cells, 0.0);
        c.filled.assign(cells, 0);
        return c;
    }

    /// Discrete integral of (1 ^ y^2) n(dy) at cell (k, i), tails counted at full weight.
    double integrability(std::size_t k, std::size_t i) const
    {
        double s = tail_lo[cell(k, i)] + tail_hi[cell(k, i)];
        const auto row = kernel(k, i);
        for (std::size_t j = 0; j < ny(); ++j) {
            const double y = y_grid.point(j);
            s += std::min(1.0, y * y) * row[j] * y_grid.step();
        }
        return s;
    }

    /// Total intensity of represented jumps (|y| > cutoff) at (k, i).
    double intensity(std::size_t k, std::size_t i) const
    {
        double s = tail_lo[cell(k, i)] + tail_hi[cell(k, i)];
        const auto row = kernel(k, i);
        for (std::size_t j = 0; j < ny(); ++j)
            if (std::abs(y_grid.point(j)) > jump_cutoff) s += row[j] * y_grid.step();
        return s;
    }

    void validate() const
    {
        detail::require(nt() >= 1, "coefficients: no times");
        for (std::size_t k = 1; k < nt(); ++k)
            detail::require(times[k] > times[k - 1], "coefficients: times must increase");
        detail::require(nz() >= 2, "coefficients: z grid needs >= 2 nodes");
        const std::size_t cells = nt() * nz();
        detail::require(b.size() == cells && a.size() == cells, "coefficients: b/a shape mismatch");
        detail::require(n.size() == cells * ny(), "coefficients: kernel shape mismatch");
        detail::require(tail_lo.size() == cells && tail_hi.size() == cells && filled.size() == cells,
                        "coefficients: tail/flag shape mismatch");
        detail::require(jump_cutoff >= 0.0, "coefficients: negative jump cutoff");
        for (std::size_t c = 0; c < cells; ++c) {
            detail::require(std::isfinite(b[c]), "coefficients: non-finite drift");
            detail::require(std::isfinite(a[c]) && a[c] >= 0.0, "coefficients: a must be finite and >= 0");
            detail::require(tail_lo[c] >= 0.0 && tail_hi[c] >= 0.0, "coefficients: negative tail mass");
        }
        for (double v : n) detail::require(std::isfinite(v) && v >= 0.0, "coefficients: kernel must be >= 0");
        if (std::isfinite(integrability_bound) && has_jumps()) {
            for (std::size_t k = 0; k < nt(); ++k)
                for (std::size_t i = 0; i < nz(); ++i)
                    detail::require(integrability(k, i) <= integrability_bound,
                                    "coefficients: integral of (1 ^ y^2) n exceeds the declared bound");
        }
    }

    double drift_at(const TimeLocation& tl, double x) const { return field_at(b, tl, x); }
    double a_at(const TimeLocation& tl, double x) const { return field_at(a, tl, x); }

    /// Interpolated kernel row and tail masses at (t, x).
    void kernel_at(const TimeLocation& tl, double x, std::span<double> row, double& lo, double& hi) const
    {
        const GridLocation zl = z_grid.locate(x);
        std::fill(row.begin(), row.end(), 0.0);
        lo = 0.0;
        hi = 0.0;
        for_corners(tl, zl, [&](std::size_t c, double w) {
            const double* src = n.data() + c * ny();
            for (std::size_t j = 0; j < ny(); ++j) row[j] += w * src[j];
            lo += w * tail_lo[c];
            hi += w * tail_hi[c];
        });
    }

    bool operator==(const ProjectedCoefficients&) const = default;

private:
    template <class F>
    void for_corners(const TimeLocation& tl, const GridLocation& zl, F&& f) const
    {
        const std::size_t k1 = std::min(tl.index + 1, nt() - 1);
        const std::size_t i1 = std::min(zl.index + 1, nz() - 1);
        const double wt[2] = {1.0 - tl.weight, tl.weight};
        const double wz[2] = {1.0 - zl.weight, zl.weight};
        const std::size_t ks[2] = {tl.index, k1};
        const std::size_t is[2] = {zl.index, i1};
        for (int u = 0; u < 2; ++u)
            for (int v = 0; v < 2; ++v) {
                const double w = wt[u] * wz[v];
                if (w != 0.0) f(cell(ks[u], is[v]), w);
            }
    }

    double field_at(const std::vector<double>& f, const TimeLocation& tl, double x) const
    {
        double s = 0.0;
        for_corners(tl, z_grid.locate(x), [&](std::size_t c, double w) { s += w * f[c]; });
        return s;
    }
};

namespace detail {

inline nlohmann::json grid_json(const UniformGrid& g)
{
    return {{"lo", g.lo()}, {"step", g.step()}, {"size", g.size()}};
}

inline UniformGrid grid_from_json(const nlohmann::json& j)
{
    const auto size = j.at("size").get<std::size_t>();
    if (size == 0) return {};
    return UniformGrid(j.at("lo").get<double>(), j.at("step").get<double>(), size);
}

inline std::string join_path(const std::string& dir, const std::string& name)
{
    if (dir.empty()) return name;
    return dir.back() == '/' ? dir + name : dir + "/" + name;
}

} // namespace detail

/// Writes coefficients.csv (t,z,b,a), kernel.csv (t,z,y,n),
/// tails.csv (t,z,tail_lo,tail_hi,filled) and coefficients.json (grids and
/// settings) into `dir`.
inline void write_coefficients(const ProjectedCoefficients& c, const std::string& dir)
{
    {
        io::CsvWriter w(detail::join_path(dir, "coefficients.csv"), {"t", "z", "b", "a"});
        for (std::size_t k = 0; k < c.nt(); ++k)
            for (std::size_t i = 0; i < c.nz(); ++i)
                w.row({c.times[k], c.z_grid.point(i), c.b[c.cell(k, i)], c.a[c.cell(k, i)]});
        w.close();
    }
    {
        io::CsvWriter w(detail::join_path(dir, "tails.csv"), {"t", "z", "tail_lo", "tail_hi", "filled"});
        for (std::size_t k = 0; k < c.nt(); ++k)
            for (std::size_t i = 0; i < c.nz(); ++i)
                w.row({c.times[k], c.z_grid.point(i), c.tail_lo[c.cell(k, i)], c.tail_hi[c.cell(k, i)],
                       static_cast<double>(c.filled[c.cell(k, i)])});
        w.close();
    }
    if (c.has_jumps()) {
        io::CsvWriter w(detail::join_path(dir, "kernel.csv"), {"t", "z", "y", "n"});
        for (std::size_t k = 0; k < c.nt(); ++k)
            for (std::size_t i = 0; i < c.nz(); ++i)
                for (std::size_t j = 0; j < c.ny(); ++j)
                    w.row({c.times[k], c.z_grid.point(i), c.y_grid.point(j), c.kernel(k, i)[j]});
        w.close();
    }
    nlohmann::json meta = {
        {"times", c.times},
        {"z_grid", detail::grid_json(c.z_grid)},
        {"y_grid", detail::grid_json(c.y_grid)},
        {"jump_cutoff", c.jump_cutoff},
        {"small_jump_mode", c.small_mode == SmallJumpMode::gaussian ? "gaussian" : "drop"},
        {"integrability_bound", std::isfinite(c.integrability_bound) ? nlohmann::json(c.integrability_bound)
                                                                      : nlohmann::json(nullptr)},
    };
    std::ofstream os(detail::join_path(dir, "coefficients.json"));
    os << meta.dump(2) << '\n';
    if (!os) throw NumericError("cannot write coefficients.json in " + dir);
}

inline ProjectedCoefficients read_coefficients(const std::string& dir)
{
    std::ifstream is(detail::join_path(dir, "coefficients.json"));
    if (!is) throw ConfigError("cannot open coefficients.json in " + dir);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("coefficients.json: ") + e.what());
    }
    auto c = ProjectedCoefficients::zeros(meta.at("times").get<std::vector<double>>(),
                                          detail::grid_from_json(meta.at("z_grid")),
                                          detail::grid_from_json(meta.at("y_grid")));
    c.jump_cutoff = meta.at("jump_cutoff").get<double>();
    c.small_mode = meta.at("small_jump_mode").get<std::string>() == "gaussian" ? SmallJumpMode::gaussian
                                                                                : SmallJumpMode::drop;
    if (!meta.at("integrability_bound").is_null()) c.integrability_bound = meta.at("integrability_bound").get<double>();

    const std::size_t cells = c.nt() * c.nz();
    const auto main = io::read_csv(detail::join_path(dir, "coefficients.csv"));
    detail::require(main.rows.size() == cells, "coefficients.csv: row count does not match grids");
    const auto cb = main.column("b");
    const auto ca = main.column("a");
    for (std::size_t r = 0; r < cells; ++r) {
        c.b[r] = main.rows[r][cb];
        c.a[r] = main.rows[r][ca];
    }
    const auto tails = io::read_csv(detail::join_path(dir, "tails.csv"));
    detail::require(tails.rows.size() == cells, "tails.csv: row count does not match grids");
    const auto cl = tails.column("tail_lo");
    const auto ch = tails.column("tail_hi");
    const auto cf = tails.column("filled");
    for (std::size_t r = 0; r < cells; ++r) {
        c.tail_lo[r] = tails.rows[r][cl];
        c.tail_hi[r] = tails.rows[r][ch];
        c.filled[r] = tails.rows[r][cf] != 0.0 ? 1 : 0;
    }
    if (c.has_jumps()) {
        const auto ker = io::read_csv(detail::join_path(dir, "kernel.csv"));
        detail::require(ker.rows.size() == cells * c.ny(), "kernel.csv: row count does not match grids");
        const auto cn = ker.column("n");
        for (std::size_t r = 0; r < ker.rows.size(); ++r) c.n[r] = ker.rows[r][cn];
    }
    c.validate();
    return c;
}

} // namespace mproj
