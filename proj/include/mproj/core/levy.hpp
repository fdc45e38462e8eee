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
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mproj/core/error.hpp"
#include "mproj/core/rng.hpp"
#include "mproj/numerics/quadrature.hpp"

namespace mproj {

/// What happens to jumps smaller than the simulation cutoff.
enum class SmallJumpMode {
    drop,      // ignored, together with their compensator
    gaussian,  // replaced by a Brownian increment with matched second moment
};

struct JumpAtom {
    std::vector<double> y;
    double probability = 0.0;
};

namespace detail {

/// Integrate f over [a, b] (possibly infinite), splitting at -1, 0 and 1 so
/// that indicator-type integrands at the compensation boundary stay cheap.
template <class F>
double integrate_split(F&& f, double a, double b, const numerics::QuadratureOptions& opt = {})
{
    if (!(b > a)) return 0.0;
    double cuts[5];
    std::size_t n = 0;
    cuts[n++] = a;
    for (double c : {-1.0, 0.0, 1.0})
        if (c > a && c < b) cuts[n++] = c;
    cuts[n++] = b;
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) total += numerics::integrate(f, cuts[i], cuts[i + 1], opt);
    return total;
}

/// Piecewise-linear inverse CDF built from a tabulated non-negative density.
class TabulatedSampler {
public:
    TabulatedSampler() = default;

    /// Nodes must be increasing; weights are the density at the nodes.
    TabulatedSampler(std::vector<double> nodes, const std::function<double(double)>& density)
        : nodes_(std::move(nodes)), cdf_(nodes_.size(), 0.0)
    {
        std::vector<double> dens(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i) dens[i] = std::max(0.0, density(nodes_[i]));
        for (std::size_t i = 1; i < nodes_.size(); ++i)
            cdf_[i] = cdf_[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (nodes_[i] - nodes_[i - 1]);
        total_ = cdf_.empty() ? 0.0 : cdf_.back();
    }

    double total() const { return total_; }

    double sample(double u) const
    {
        const double target = u * total_;
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
        if (it == cdf_.begin()) return nodes_.front();
        if (it == cdf_.end()) return nodes_.back();
        const auto i = static_cast<std::size_t>(it - cdf_.begin());
        const double span = cdf_[i] - cdf_[i - 1];
        const double frac = span > 0.0 ? (target - cdf_[i - 1]) / span : 0.5;
        return nodes_[i - 1] + frac * (nodes_[i] - nodes_[i - 1]);
    }

private:
    std::vector<double> nodes_;
    std::vector<double> cdf_;
    double total_ = 0.0;
};

inline std::vector<double> linear_nodes(double a, double b, std::size_t n)
{
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

/// Geometric nodes from a > 0 to b > a.
inline std::vector<double> geometric_nodes(double a, double b, std::size_t n)
{
    std::vector<double> v(n);
    const double r = std::log(b / a);
    for (std::size_t i = 0; i < n; ++i) v[i] = a * std::exp(r * static_cast<double>(i) / static_cast<double>(n - 1));
    return v;
}

} // namespace detail

/// Law of the size of a single jump of a finite-activity component: either a
/// discrete set of atoms in R^d, or (d = 1) a density on [lo, hi].
class JumpLaw {
public:
    JumpLaw() = default;

    static JumpLaw atoms(std::vector<JumpAtom> atoms)
    {
        JumpLaw law;
        law.atoms_ = std::move(atoms);
        law.dim_ = law.atoms_.empty() ? 1 : law.atoms_.front().y.size();
        law.build_atom_cdf();
        return law;
    }

    /// Symmetric two-point law on {-size, +size}.
    static JumpLaw symmetric(double size) { return atoms({{{-size}, 0.5}, {{size}, 0.5}}); }

    /// Density on [lo, hi]; either bound may be infinite. Sampling uses a
    /// tabulated inverse CDF over [lo, hi] clipped to +/- tabulation_radius.
    static JumpLaw density(std::function<double(double)> pdf, double lo, double hi,
                           double tabulation_radius = 60.0)
    {
        JumpLaw law;
        law.pdf_ = std::move(pdf);
        law.lo_ = lo;
        law.hi_ = hi;
        law.dim_ = 1;
        const double a = std::max(lo, -tabulation_radius);
        const double b = std::min(hi, tabulation_radius);
        detail::require(b > a, "jump law: empty density support");
        law.sampler_ = std::make_shared<detail::TabulatedSampler>(detail::linear_nodes(a, b, 1 << 14), law.pdf_);
        return law;
    }

    std::size_t dimension() const { return dim_; }
    bool is_discrete() const { return !pdf_; }
    const std::vector<JumpAtom>& atom_list() const { return atoms_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }

    double pdf(double y) const
    {
        detail::require(static_cast<bool>(pdf_), "jump law: discrete law has no density");
        if (y < lo_ || y > hi_) return 0.0;
        return pdf_(y);
    }

    /// E[g(Y)], g taking the jump as a span.
    template <class G>
    double expect(G&& g, const numerics::QuadratureOptions& opt = {}) const
    {
        if (is_discrete()) {
            double s = 0.0;
            for (const auto& a : atoms_) s += a.probability * g(std::span<const double>(a.y));
            return s;
        }
        auto f = [&](double y) {
            const double p = pdf_(y);
            if (p == 0.0) return 0.0;
            return p * g(std::span<const double>(&y, 1));
        };
        return detail::integrate_split(f, lo_, hi_, opt);
    }

    void sample(StreamRng& rng, std::span<double> out) const
    {
        const double u = rng.uniform();
        if (is_discrete()) {
            auto it = std::upper_bound(atom_cdf_.begin(), atom_cdf_.end(), u);
            auto i = static_cast<std::size_t>(it - atom_cdf_.begin());
            if (i >= atoms_.size()) i = atoms_.size() - 1;
            std::copy(atoms_[i].y.begin(), atoms_[i].y.end(), out.begin());
            return;
        }
        out[0] = sampler_->sample(u);
    }

    void validate() const
    {
        if (is_discrete()) {
            detail::require(!atoms_.empty(), "jump law: no atoms");
            double total = 0.0;
            for (const auto& a : atoms_) {
                detail::require(a.y.size() == dim_, "jump law: atoms of mixed dimension");
                detail::require(a.probability >= 0.0, "jump law: negative atom probability");
                bool nonzero = false;
                for (double v : a.y) {
                    detail::require(std::isfinite(v), "jump law: non-finite atom");
                    nonzero = nonzero || v != 0.0;
                }
                detail::require(nonzero, "jump law: atom at the origin");
                total += a.probability;
            }
            detail::require(std::abs(total - 1.0) <= 1e-12, "jump law: atom probabilities must sum to 1");
            return;
        }
        const double mass = detail::integrate_split([&](double y) { return pdf_(y); }, lo_, hi_);
        detail::require(std::abs(mass - 1.0) <= 1e-6,
                        "jump law: jump_pdf integrates to " + std::to_string(mass) + ", expected 1");
    }

private:
    void build_atom_cdf()
    {
        atom_cdf_.clear();
        double c = 0.0;
        for (const auto& a : atoms_) {
            c += a.probability;
            atom_cdf_.push_back(c);
        }
    }

    std::vector<JumpAtom> atoms_;
    std::vector<double> atom_cdf_;
    std::function<double(double)> pdf_;
    std::shared_ptr<const detail::TabulatedSampler> sampler_;
    double lo_ = 0.0;
    double hi_ = 0.0;
    std::size_t dim_ = 1;
};

struct FiniteActivity {
    double intensity = 0.0;
    JumpLaw law;
};

/// Infinite-activity density on R \ {0} (d = 1). Jumps with |y| <= cutoff are
/// not simulated; `mode` says how they are substituted.
struct InfiniteActivity {
    std::function<double(double)> density;
    double cutoff = 0.0;
    SmallJumpMode mode = SmallJumpMode::gaussian;
    double radius = 60.0;  // jumps beyond this radius are not simulated
};

/// c / |y|^(1 + exponent) plus a finite-activity remainder (d = 1).
struct StableTail {
    double c = 0.0;
    double exponent = 1.0;
    double cutoff = 0.0;
    SmallJumpMode mode = SmallJumpMode::gaussian;
    double radius = 60.0;
    std::optional<FiniteActivity> remainder;
};

/// Levy measure nu of a Poisson random measure driving a model.
class LevyDensitySpec {
public:
    using Variant = std::variant<FiniteActivity, InfiniteActivity, StableTail>;

    LevyDensitySpec() : LevyDensitySpec(FiniteActivity{0.0, JumpLaw::symmetric(1.0)}) {}

    LevyDensitySpec(Variant v) : v_(std::move(v)) { prepare(); }  // NOLINT(google-explicit-constructor)

    static LevyDensitySpec compound_poisson(double intensity, JumpLaw law)
    {
        return LevyDensitySpec(FiniteActivity{intensity, std::move(law)});
    }

    const Variant& variant() const { return v_; }

    std::size_t dimension() const
    {
        if (const auto* f = std::get_if<FiniteActivity>(&v_)) return f->law.dimension();
        return 1;
    }

    bool is_finite_activity() const { return std::holds_alternative<FiniteActivity>(v_); }

    const StableTail* stable_tail() const { return std::get_if<StableTail>(&v_); }

    void validate() const
    {
        std::visit([](const auto& c) { validate_component(c); }, v_);
        const double integ = integrability();
        detail::require(std::isfinite(integ), "levy measure: integral of (1 ^ |y|^2) is not finite");
    }

    /// Density nu(y) for d = 1 density-based specs.
    double density(double y) const
    {
        return std::visit(
            [&](const auto& c) -> double {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, FiniteActivity>) {
                    return c.intensity * c.law.pdf(y);
                } else if constexpr (std::is_same_v<T, InfiniteActivity>) {
                    return y == 0.0 ? 0.0 : c.density(y);
                } else {
                    double v = y == 0.0 ? 0.0 : c.c / std::pow(std::abs(y), 1.0 + c.exponent);
                    if (c.remainder && !c.remainder->law.is_discrete())
                        v += c.remainder->intensity * c.remainder->law.pdf(y);
                    return v;
                }
            },
            v_);
    }

    /// Integral of g over the part of nu that is simulated as jumps
    /// (everything for finite activity, |y| > cutoff otherwise).
    template <class G>
    double integrate_large(G&& g, const numerics::QuadratureOptions& opt = {}) const
    {
        return std::visit(
            [&](const auto& c) -> double {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, FiniteActivity>) {
                    return c.intensity * c.law.expect(g, opt);
                } else {
                    auto f = [&](double y) {
                        const double d = cutoff_density(c, y);
                        return d == 0.0 ? 0.0 : d * g(std::span<const double>(&y, 1));
                    };
                    double s = detail::integrate_split(f, -c.radius, -c.cutoff, opt) +
                               detail::integrate_split(f, c.cutoff, c.radius, opt);
                    if constexpr (std::is_same_v<T, StableTail>)
                        if (c.remainder) s += c.remainder->intensity * c.remainder->law.expect(g, opt);
                    return s;
                }
            },
            v_);
    }

    /// Integral of g over all of nu (g must be integrable near the origin).
    template <class G>
    double integrate(G&& g, const numerics::QuadratureOptions& opt = {}) const
    {
        return std::visit(
            [&](const auto& c) -> double {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, FiniteActivity>) {
                    return c.intensity * c.law.expect(g, opt);
                } else {
                    auto f = [&](double y) {
                        const double d = singular_density(c, y);
                        if (d == 0.0 || !std::isfinite(d)) return 0.0;  // y underflowed next to the pole
                        const double v = d * g(std::span<const double>(&y, 1));
                        return std::isfinite(v) ? v : 0.0;
                    };
                    double s = integrate_near_zero(f, -1.0, 0.0) + integrate_near_zero(f, 0.0, 1.0) +
                               numerics::integrate(f, -numerics::kInf, -1.0, opt) +
                               numerics::integrate(f, 1.0, numerics::kInf, opt);
                    if constexpr (std::is_same_v<T, StableTail>)
                        if (c.remainder) s += c.remainder->intensity * c.remainder->law.expect(g, opt);
                    return s;
                }
            },
            v_);
    }

    /// Integral of (1 ^ |y|^2) against nu.
    double integrability() const
    {
        if (const auto* s = stable_tail()) {
            // analytic for the stable part
            double v = 2.0 * s->c * (1.0 / (2.0 - s->exponent) + 1.0 / s->exponent);
            if (s->remainder)
                v += s->remainder->intensity * s->remainder->law.expect([](std::span<const double> y) {
                         return std::min(1.0, norm2(y));
                     });
            return v;
        }
        return integrate([](std::span<const double> y) { return std::min(1.0, norm2(y)); });
    }

    /// nu({|y| >= R}).
    double tail_mass(double radius) const
    {
        detail::require(radius > 0.0, "levy measure: tail radius must be > 0");
        return std::visit(
            [&](const auto& c) -> double {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, FiniteActivity>) {
                    return finite_tail(c, radius);
                } else if constexpr (std::is_same_v<T, InfiniteActivity>) {
                    auto f = [&](double y) { return c.density(y); };
                    return numerics::integrate(f, radius, numerics::kInf) +
                           numerics::integrate(f, -numerics::kInf, -radius);
                } else {
                    double v = 2.0 * c.c / c.exponent * std::pow(radius, -c.exponent);
                    if (c.remainder) v += finite_tail(*c.remainder, radius);
                    return v;
                }
            },
            v_);
    }

    /// Intensity of simulated jumps.
    double large_intensity() const { return large_intensity_; }

    /// Second moment of the non-simulated small jumps when they are replaced
    /// by a Gaussian, zero otherwise.
    double small_jump_variance() const { return small_variance_; }

    void sample_large(StreamRng& rng, std::span<double> out) const
    {
        std::visit(
            [&](const auto& c) {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, FiniteActivity>) {
                    c.law.sample(rng, out);
                } else {
                    const double u = rng.uniform() * large_intensity_;
                    if constexpr (std::is_same_v<T, StableTail>) {
                        if (c.remainder && u >= table_mass_) {
                            c.remainder->law.sample(rng, out);
                            return;
                        }
                    }
                    // negative side first, then positive side
                    const double v = rng.uniform();
                    if (u < neg_->total()) out[0] = -neg_->sample(v);
                    else out[0] = pos_->sample(v);
                }
            },
            v_);
    }

    static double norm2(std::span<const double> y)
    {
        double s = 0.0;
        for (double v : y) s += v * v;
        return s;
    }

private:
    static double finite_tail(const FiniteActivity& f, double radius)
    {
        if (f.law.is_discrete()) {
            double s = 0.0;
            for (const auto& a : f.law.atom_list())
                if (std::sqrt(norm2(a.y)) >= radius) s += a.probability;
            return f.intensity * s;
        }
        auto pdf = [&](double y) { return f.law.pdf(y); };
        double s = 0.0;
        if (f.law.hi() > radius) s += detail::integrate_split(pdf, std::max(radius, f.law.lo()), f.law.hi(), {});
        if (f.law.lo() < -radius) s += detail::integrate_split(pdf, f.law.lo(), std::min(-radius, f.law.hi()), {});
        return f.intensity * s;
    }

    static void validate_component(const FiniteActivity& f)
    {
        detail::require(std::isfinite(f.intensity) && f.intensity >= 0.0,
                        "levy measure: intensity must be finite and >= 0");
        f.law.validate();
    }

    static void validate_component(const InfiniteActivity& c)
    {
        detail::require(static_cast<bool>(c.density), "levy measure: infinite activity needs a density");
        detail::require(c.cutoff > 0.0, "levy measure: infinite activity requires a small-jump cutoff > 0");
        detail::require(c.radius > c.cutoff, "levy measure: radius must exceed cutoff");
    }

    static void validate_component(const StableTail& s)
    {
        detail::require(s.c >= 0.0, "levy measure: stable constant must be >= 0");
        detail::require(s.exponent > 0.0 && s.exponent < 2.0, "levy measure: stable exponent must lie in (0, 2)");
        detail::require(s.cutoff > 0.0, "levy measure: stable tail requires a small-jump cutoff > 0");
        detail::require(s.radius > s.cutoff, "levy measure: radius must exceed cutoff");
        if (s.remainder) validate_component(*s.remainder);
    }

    static double singular_density(const InfiniteActivity& c, double y) { return y == 0.0 ? 0.0 : c.density(y); }

    static double singular_density(const StableTail& s, double y)
    {
        return y == 0.0 ? 0.0 : s.c / std::pow(std::abs(y), 1.0 + s.exponent);
    }

    template <class T>
    static double cutoff_density(const T& c, double y)
    {
        if (std::abs(y) <= c.cutoff) return 0.0;
        return singular_density(c, y);
    }

    template <class F>
    static double integrate_near_zero(F&& f, double a, double b)
    {
        return numerics::integrate_singular(f, a, b, 1e-12);
    }

    void prepare()
    {
        std::visit(
            [&](const auto& c) {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, FiniteActivity>) {
                    large_intensity_ = c.intensity;
                    small_variance_ = 0.0;
                } else {
                    if (!(c.cutoff > 0.0) || !(c.radius > c.cutoff)) return;  // rejected by validate()
                    if constexpr (std::is_same_v<T, StableTail>)
                        if (!(c.exponent > 0.0 && c.exponent < 2.0)) return;
                    auto dens = [&c](double y) { return singular_density(c, y); };
                    const auto nodes = detail::geometric_nodes(c.cutoff, c.radius, 1 << 14);
                    pos_ = std::make_shared<detail::TabulatedSampler>(nodes, [&](double y) { return dens(y); });
                    neg_ = std::make_shared<detail::TabulatedSampler>(nodes, [&](double y) { return dens(-y); });
                    table_mass_ = pos_->total() + neg_->total();
                    large_intensity_ = table_mass_;
                    if constexpr (std::is_same_v<T, StableTail>)
                        if (c.remainder) large_intensity_ += c.remainder->intensity;
                    small_variance_ = 0.0;
                    if (c.mode == SmallJumpMode::gaussian) {
                        if constexpr (std::is_same_v<T, StableTail>) {
                            small_variance_ = 2.0 * c.c * std::pow(c.cutoff, 2.0 - c.exponent) / (2.0 - c.exponent);
                        } else {
                            auto y2 = [&](double y) {
                                const double d = dens(y);
                                return std::isfinite(d) ? y * y * d : 0.0;
                            };
                            small_variance_ = numerics::integrate_singular(y2, -c.cutoff, 0.0) +
                                              numerics::integrate_singular(y2, 0.0, c.cutoff);
                        }
                    }
                }
            },
            v_);
    }

    Variant v_;
    double large_intensity_ = 0.0;
    double small_variance_ = 0.0;
    double table_mass_ = 0.0;
    std::shared_ptr<const detail::TabulatedSampler> pos_;
    std::shared_ptr<const detail::TabulatedSampler> neg_;
};

} // namespace mproj
