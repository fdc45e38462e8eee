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
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "mproj/core/error.hpp"

namespace mproj::numerics {

/// Raw moments E[X], E[X^2], E[X^3], E[X^4].
using Moments = std::array<double, 4>;

inline Moments raw_moments(std::span<const double> xs)
{
    Moments m{0.0, 0.0, 0.0, 0.0};
    if (xs.empty()) return m;
    for (double x : xs) {
        const double x2 = x * x;
        m[0] += x;
        m[1] += x2;
        m[2] += x2 * x;
        m[3] += x2 * x2;
    }
    for (double& v : m) v /= static_cast<double>(xs.size());
    return m;
}

struct MeanStats {
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    double standard_error = 0.0;
};

inline MeanStats mean_stats(std::span<const double> xs)
{
    MeanStats s;
    const auto n = static_cast<double>(xs.size());
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= n;
    if (xs.size() > 1) {
        for (double x : xs) s.variance += (x - s.mean) * (x - s.mean);
        s.variance /= (n - 1.0);
    }
    s.standard_error = std::sqrt(s.variance / n);
    return s;
}

inline double normal_cdf(double x, double mean = 0.0, double sd = 1.0)
{
    return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

inline double normal_pdf(double x, double mean = 0.0, double sd = 1.0)
{
    const double u = (x - mean) / sd;
    return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

namespace detail {

inline std::vector<double> sorted_copy(std::span<const double> xs)
{
    std::vector<double> v(xs.begin(), xs.end());
    for (double x : v)
        if (std::isnan(x)) throw NumericError("sample contains NaN");
    std::sort(v.begin(), v.end());
    return v;
}

/// Walk the merged order of two sorted samples, calling
/// visit(x, next_x, |F_a - F_b|) on every gap between consecutive distinct
/// values. Ties are consumed from both sides at once, so the sequence of
/// calls is identical when a and b are swapped.
template <class Visit>
void walk_ecdf_gaps(const std::vector<double>& a, const std::vector<double>& b, Visit&& visit)
{
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.size() || j < b.size()) {
        double x;
        if (j >= b.size() || (i < a.size() && a[i] <= b[j])) x = a[i];
        else x = b[j];
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        const double gap = std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb);
        double next = x;
        if (i < a.size() && j < b.size()) next = std::min(a[i], b[j]);
        else if (i < a.size()) next = a[i];
        else if (j < b.size()) next = b[j];
        visit(x, next, gap);
    }
}

} // namespace detail

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_two_sample(std::span<const double> a, std::span<const double> b)
{
    const auto sa = detail::sorted_copy(a);
    const auto sb = detail::sorted_copy(b);
    double d = 0.0;
    detail::walk_ecdf_gaps(sa, sb, [&](double, double, double gap) { d = std::max(d, gap); });
    return d;
}

/// Two-sample Wasserstein-1 distance, the integral of |F_a - F_b|.
inline double w1_two_sample(std::span<const double> a, std::span<const double> b)
{
    const auto sa = detail::sorted_copy(a);
    const auto sb = detail::sorted_copy(b);
    double w = 0.0;
    detail::walk_ecdf_gaps(sa, sb, [&](double x, double next, double gap) { w += gap * (next - x); });
    return w;
}

/// One-sample KS statistic against a continuous CDF.
inline double ks_one_sample(std::span<const double> sample, const std::function<double(double)>& cdf)
{
    const auto s = detail::sorted_copy(sample);
    const auto n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = cdf(s[i]);
        d = std::max(d, std::max(static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n));
    }
    return d;
}

/// W1 against a distribution given by its quantile function, using the
/// midpoint rule on the sorted sample: mean |x_(i) - Q((i - 1/2)/n)|.
inline double w1_one_sample(std::span<const double> sample, const std::function<double(double)>& quantile)
{
    const auto s = detail::sorted_copy(sample);
    const auto n = static_cast<double>(s.size());
    double w = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        w += std::abs(s[i] - quantile((static_cast<double>(i) + 0.5) / n));
    return w / n;
}

} // namespace mproj::numerics
