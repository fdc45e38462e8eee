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

#include <cmath>
#include <fstream>
#include <numbers>
#include <vector>

#include <boost/math/special_functions/erf.hpp>
#include <gtest/gtest.h>

#include "mproj/core/coefficients.hpp"
#include "mproj/core/density.hpp"
#include "mproj/core/ensemble.hpp"
#include "mproj/core/grid.hpp"
#include "mproj/core/levy.hpp"
#include "mproj/core/model.hpp"
#include "mproj/core/rng.hpp"
#include "mproj/io/csv.hpp"
#include "mproj/simulate/simulate.hpp"
#include "support.hpp"

using namespace mproj;

namespace {

LevyDensitySpec laplace_jumps(double intensity)
{
    auto pdf = [](double y) { return 0.5 * std::exp(-std::abs(y)); };
    return LevyDensitySpec::compound_poisson(intensity, JumpLaw::density(pdf, -numerics::kInf, numerics::kInf));
}

} // namespace

TEST(TimeGrid, UniformStepAndExactEndpoint)
{
    const TimeGrid g(0.0, 1.0, 7);
    EXPECT_DOUBLE_EQ(g.dt(), 1.0 / 7.0);
    EXPECT_EQ(g.time(7), 1.0);
    for (std::size_t k = 1; k <= 7; ++k) EXPECT_GT(g.time(k), g.time(k - 1));
    EXPECT_EQ(g.nearest_step(0.49), 3u);
    EXPECT_EQ(g.nearest_step(-3.0), 0u);
    EXPECT_EQ(g.nearest_step(9.0), 7u);
}

TEST(TimeGrid, RejectsInvalidBounds)
{
    EXPECT_THROW(TimeGrid(1.0, 1.0, 10), ConfigError);
    EXPECT_THROW(TimeGrid(0.0, 1.0, 0), ConfigError);
    EXPECT_THROW(TimeGrid(0.0, std::nan(""), 4), ConfigError);
}

TEST(UniformGrid, LocateInterpolatesAndClamps)
{
    const auto g = UniformGrid::from_range(-1.0, 1.0, 5);
    EXPECT_DOUBLE_EQ(g.step(), 0.5);
    const auto loc = g.locate(0.1);
    EXPECT_EQ(loc.index, 2u);
    EXPECT_NEAR(loc.weight, 0.2, 1e-15);
    EXPECT_FALSE(loc.clamped);
    EXPECT_TRUE(g.locate(-3.0).clamped);
    EXPECT_TRUE(g.locate(1.5).clamped);
    EXPECT_EQ(g.nearest(0.74), 3u);
    EXPECT_EQ(g.nearest(-9.0), 0u);
}

TEST(StreamRng, StreamsAreReproducibleAndDistinct)
{
    auto a = StreamRng::for_stream(42, 3);
    auto b = StreamRng::for_stream(42, 3);
    auto c = StreamRng::for_stream(42, 4);
    int same = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        same += x == c.next_u64();
    }
    EXPECT_EQ(same, 0);
}

TEST(StreamRng, NormalAndPoissonMoments)
{
    auto r = StreamRng::for_stream(7, 0);
    const int n = 200000;
    double s = 0.0, s2 = 0.0, ps = 0.0, ps2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
        const double k = static_cast<double>(r.poisson(3.5));
        ps += k;
        ps2 += k * k;
    }
    EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
    const double pm = ps / n;
    EXPECT_NEAR(pm, 3.5, 4.0 * std::sqrt(3.5 / n));
    EXPECT_NEAR(ps2 / n - pm * pm, 3.5, 0.1);
}

TEST(StreamRng, UniformStaysInOpenInterval)
{
    auto r = StreamRng::for_stream(1, 1);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(LevyDensitySpec, RejectsNegativeIntensityByName)
{
    const auto spec = LevyDensitySpec::compound_poisson(-1.0, JumpLaw::symmetric(1.0));
    try {
        spec.validate();
        FAIL() << "expected a ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("intensity"), std::string::npos);
    }
}

TEST(LevyDensitySpec, RejectsUnnormalisedJumpPdf)
{
    auto pdf = [](double y) { return std::exp(-std::abs(y)); };  // integrates to 2
    const auto spec = LevyDensitySpec::compound_poisson(1.0, JumpLaw::density(pdf, -numerics::kInf, numerics::kInf));
    EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(LevyDensitySpec, RejectsStableExponentOutsideOpenInterval)
{
    for (double beta : {0.0, 2.0, 2.5}) {
        const LevyDensitySpec spec(StableTail{.c = 1.0, .exponent = beta, .cutoff = 0.01});
        EXPECT_THROW(spec.validate(), ConfigError) << beta;
    }
}

TEST(LevyDensitySpec, InfiniteActivityNeedsCutoff)
{
    const LevyDensitySpec spec(InfiniteActivity{[](double y) { return 1.0 / std::pow(std::abs(y), 1.5); }, 0.0});
    EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(LevyDensitySpec, LaplaceIntegrabilityAndTails)
{
    const auto spec = laplace_jumps(1.0);
    // int min(1, y^2) e^{-|y|}/2 dy = (2 - 5/e) + 1/e
    EXPECT_NEAR(spec.integrability(), 2.0 - 4.0 / std::numbers::e, 1e-9);
    for (double r : {0.5, 1.0, 2.0, 4.0, 8.0}) EXPECT_NEAR(spec.tail_mass(r), std::exp(-r), 1e-8) << r;
}

TEST(LevyDensitySpec, StableIntegrabilityAndTailsAreAnalytic)
{
    const LevyDensitySpec spec(StableTail{.c = 0.3, .exponent = 1.2, .cutoff = 0.05});
    EXPECT_NEAR(spec.integrability(), 2.0 * 0.3 * (1.0 / 0.8 + 1.0 / 1.2), 1e-14);
    EXPECT_NEAR(spec.tail_mass(2.0), 2.0 * 0.3 / 1.2 * std::pow(2.0, -1.2), 1e-14);
}

TEST(LevyDensitySpec, AtomTailsCountExactly)
{
    const auto spec = LevyDensitySpec::compound_poisson(2.0, JumpLaw::atoms({{{2.0}, 0.5}, {{-0.5}, 0.5}}));
    EXPECT_DOUBLE_EQ(spec.tail_mass(1.0), 1.0);
    EXPECT_DOUBLE_EQ(spec.tail_mass(0.5), 2.0);
    EXPECT_DOUBLE_EQ(spec.tail_mass(3.0), 0.0);
}

TEST(LevyDensitySpec, GaussianSmallJumpVarianceMatchesIntegral)
{
    const double c = 0.5, beta = 1.0, eps = 0.1;
    const LevyDensitySpec spec(StableTail{.c = c, .exponent = beta, .cutoff = eps});
    // 2 c int_0^eps y^{1-beta} dy
    EXPECT_NEAR(spec.small_jump_variance(), 2.0 * c * std::pow(eps, 2.0 - beta) / (2.0 - beta), 1e-9);
}

TEST(ItoModel, ValidateCatchesShapeErrors)
{
    auto m = scalar_model("m", [](double, double, auto) { return 0.0; }, [](double, double, auto) { return 1.0; });
    EXPECT_NO_THROW(m.validate());
    m.initial.point = {0.0, 1.0};
    EXPECT_THROW(m.validate(), ConfigError);
    m.initial.point = {0.0};
    m.aux_dim = 1;
    EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Csv, DoublesRoundTripExactly)
{
    test_support::Gen gen(11);
    for (int i = 0; i < 1000; ++i) {
        const double v = gen.normal() * std::pow(10.0, gen.uniform(-300.0, 300.0));
        EXPECT_EQ(io::parse_double(io::format_double(v), "test"), v);
    }
    EXPECT_THROW(io::parse_double("1.5x", "field"), ConfigError);
}

TEST(Ensemble, BinaryRoundTripIsExact)
{
    auto m = scalar_model("bm", [](double, double x, auto) { return -x; }, [](double, double, auto) { return 0.7; });
    m.jumps = PoissonDriven{LevyDensitySpec::compound_poisson(3.0, JumpLaw::symmetric(0.4)), {}, {}};
    m.aux_dim = 1;
    m.aux_init = [](std::span<const double> x0, std::span<double> aux) { aux[0] = x0[0]; };
    m.step_hook = [](const StepContext& c, std::span<double> aux) { aux[0] += c.state_before[0] * c.dt; };
    const auto e = simulate_ito(m, TimeGrid(0.0, 1.0, 20), 50, 5);
    EXPECT_GT(e.jump_sizes.size(), 0u);
    test_support::TempDir dir("ens");
    write_ensemble(e, dir.file("e.bin"));
    const auto back = read_ensemble(dir.file("e.bin"));
    EXPECT_TRUE(back == e);
}

TEST(Ensemble, ReadRejectsForeignFile)
{
    test_support::TempDir dir("ens_bad");
    {
        std::ofstream os(dir.file("x.bin"), std::ios::binary);
        os << "not an ensemble";
    }
    EXPECT_THROW(read_ensemble(dir.file("x.bin")), ConfigError);
}

TEST(Coefficients, CsvRoundTripIsExact)
{
    test_support::Gen gen(3);
    auto c = ProjectedCoefficients::zeros({0.0, 0.5, 1.0}, UniformGrid::from_range(-1.0, 1.0, 9),
                                          UniformGrid::from_range(-2.0, 2.0, 8));
    for (auto& v : c.b) v = gen.normal();
    for (auto& v : c.a) v = gen.uniform(0.0, 2.0) / 3.0;
    for (auto& v : c.n) v = gen.uniform(0.0, 1.0) / 7.0;
    for (auto& v : c.tail_lo) v = gen.uniform(0.0, 0.1);
    for (auto& v : c.tail_hi) v = gen.uniform(0.0, 0.1);
    c.filled[4] = 1;
    c.jump_cutoff = 0.25;
    c.small_mode = SmallJumpMode::gaussian;
    test_support::TempDir dir("coef");
    write_coefficients(c, dir.str());
    const auto back = read_coefficients(dir.str());
    EXPECT_TRUE(back == c);
}

TEST(Coefficients, ValidateRejectsNegativeA)
{
    auto c = ProjectedCoefficients::zeros({0.0}, UniformGrid::from_range(-1.0, 1.0, 3));
    c.a[1] = -1e-3;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Coefficients, InterpolationIsBilinearAndClamped)
{
    auto c = ProjectedCoefficients::zeros({0.0, 1.0}, UniformGrid::from_range(0.0, 1.0, 2));
    c.b = {0.0, 1.0, 2.0, 3.0};  // b(t, z) = z + 2t
    EXPECT_NEAR(c.drift_at(locate_time(c.times, 0.25), 0.5), 1.0, 1e-15);
    EXPECT_NEAR(c.drift_at(locate_time(c.times, 5.0), 9.0), 3.0, 1e-15);
    EXPECT_NEAR(c.drift_at(locate_time(c.times, -1.0), -9.0), 0.0, 1e-15);
}

TEST(Density, GaussianHasUnitMassAndRoundTrips)
{
    const auto g = UniformGrid::from_range(-5.0, 5.0, 501);
    auto d = DensityField::gaussian(g, 0.3, 0.8, 0.0);
    EXPECT_NEAR(d.mass(0), 1.0, 1e-14);
    const auto m = d.moments(0);
    EXPECT_NEAR(m[0], 0.3, 1e-6);
    EXPECT_NEAR(m[1] - m[0] * m[0], 0.64, 1e-5);
    d.push(1.0, d.row(0));
    test_support::TempDir dir("dens");
    write_density(d, dir.str());
    EXPECT_TRUE(read_density(dir.str()) == d);
}

TEST(Density, QuantileInvertsCdf)
{
    const auto g = UniformGrid::from_range(-5.0, 5.0, 1001);
    const auto d = DensityField::gaussian(g, 0.0, 1.0);
    const auto c = d.cumulative(0);
    for (double u : {0.01, 0.2, 0.5, 0.77, 0.99}) {
        const double x = DensityField::quantile_from(g, c, u);
        EXPECT_NEAR(DensityField::cdf_from(g, c, x), u, 1e-12);
        EXPECT_NEAR(x, std::sqrt(2.0) * boost::math::erf_inv(2.0 * u - 1.0), 2e-3);
    }
}

TEST(Density, PointMassSplitsLinearly)
{
    const auto g = UniformGrid::from_range(0.0, 1.0, 11);
    const auto d = DensityField::point_mass(g, 0.33);
    EXPECT_NEAR(d.mass(0), 1.0, 1e-14);
    EXPECT_NEAR(d.moments(0)[0], 0.33, 1e-14);
}
