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
#include <cstddef>
#include <string>
#include <vector>

#include "mproj/core/error.hpp"

namespace mproj {

/// Uniform time discretisation of [t_start, t_end].
class TimeGrid {
public:
    TimeGrid() = default;

    TimeGrid(double t_start, double t_end, std::size_t n_steps)
        : t_start_(t_start), t_end_(t_end), n_steps_(n_steps)
    {
        detail::require(std::isfinite(t_start) && std::isfinite(t_end),
                        "time grid: bounds must be finite");
        detail::require(t_end > t_start, "time grid: t_end must exceed t_start");
        detail::require(n_steps > 0, "time grid: n_steps must be positive");
        detail::require(dt() > 0.0, "time grid: step underflows");
    }

    double t_start() const { return t_start_; }
    double t_end() const { return t_end_; }
    std::size_t n_steps() const { return n_steps_; }
    double dt() const { return (t_end_ - t_start_) / static_cast<double>(n_steps_); }

    /// Time of grid point k, k in [0, n_steps]. The last point is exactly t_end.
    double time(std::size_t k) const
    {
        if (k == n_steps_) return t_end_;
        return t_start_ + static_cast<double>(k) * dt();
    }

    /// Index of the grid point closest to t.
    std::size_t nearest_step(double t) const
    {
        const double r = std::round((t - t_start_) / dt());
        if (r <= 0.0) return 0;
        return std::min(n_steps_, static_cast<std::size_t>(r));
    }

    bool operator==(const TimeGrid&) const = default;

private:
    double t_start_ = 0.0;
    double t_end_ = 1.0;
    std::size_t n_steps_ = 1;
};

/// Location of a point inside a uniform grid for linear interpolation:
/// value = (1 - weight) * f[index] + weight * f[index + 1].
struct GridLocation {
    std::size_t index = 0;
    double weight = 0.0;
    bool clamped = false;
};

/// Uniform 1-d grid {lo + i * step}, i = 0..size-1. Used for state grids (z, x)
/// and for jump-size grids (y), where nodes are cell centres of width step.
class UniformGrid {
public:
    UniformGrid() = default;

    UniformGrid(double lo, double step, std::size_t size) : lo_(lo), step_(step), size_(size)
    {
        detail::require(std::isfinite(lo) && std::isfinite(step), "grid: non-finite parameters");
        detail::require(size >= 1, "grid: needs at least one node");
        detail::require(size == 1 || step > 0.0, "grid: step must be positive");
    }

    /// n nodes spanning [lo, hi] inclusive.
    static UniformGrid from_range(double lo, double hi, std::size_t n)
    {
        detail::require(n >= 2, "grid: from_range needs n >= 2");
        detail::require(hi > lo, "grid: hi must exceed lo");
        return UniformGrid(lo, (hi - lo) / static_cast<double>(n - 1), n);
    }

    /// Nodes lo, lo + step, ... up to hi (hi included up to rounding).
    static UniformGrid from_step(double lo, double hi, double step)
    {
        detail::require(step > 0.0 && hi > lo, "grid: invalid range or step");
        const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
        return UniformGrid(lo, step, n);
    }

    double lo() const { return lo_; }
    double hi() const { return point(size_ - 1); }
    double step() const { return step_; }
    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    double point(std::size_t i) const { return lo_ + static_cast<double>(i) * step_; }

    std::vector<double> points() const
    {
        std::vector<double> out(size_);
        for (std::size_t i = 0; i < size_; ++i) out[i] = point(i);
        return out;
    }

    GridLocation locate(double x) const
    {
        if (size_ == 1) return {0, 0.0, x != lo_};
        const double u = (x - lo_) / step_;
        if (!(u > 0.0)) return {0, 0.0, u < 0.0};
        const double last = static_cast<double>(size_ - 1);
        if (u >= last) return {size_ - 2, 1.0, u > last};
        const auto i = static_cast<std::size_t>(u);
        return {i, u - static_cast<double>(i), false};
    }

    std::size_t nearest(double x) const
    {
        const double u = std::round((x - lo_) / step_);
        if (!(u > 0.0)) return 0;
        return std::min(size_ - 1, static_cast<std::size_t>(u));
    }

    bool operator==(const UniformGrid&) const = default;

private:
    double lo_ = 0.0;
    double step_ = 1.0;
    std::size_t size_ = 0;
};

/// Linear interpolation of row-sampled values on a grid location.
inline double interpolate(const double* values, const GridLocation& loc, std::size_t size)
{
    if (size == 1) return values[0];
    return (1.0 - loc.weight) * values[loc.index] + loc.weight * values[loc.index + 1];
}

} // namespace mproj
