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
#include <limits>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "mproj/numerics/statistics.hpp"
#include "mproj/simulate/simulate.hpp"

using namespace mproj;

namespace {

ItoModel constant_model(double beta, double delta, double x0)
{
    return scalar_model("const", [beta](double, double, auto) { return beta; },
                        [delta](double, double, auto) { return delta; }, x0);
}

ItoModel compensated_poisson(double lambda)
{
    auto m = constant_model(0.0, 0.0, 0.0);
    m.jumps = PoissonDriven{LevyDensitySpec::compound_poisson(lambda, JumpLaw::symmetric(1.0)), {}, {}};
    return m;
}

std::vector<double> final_marginal(const PathEnsemble& e) { return e.marginal(e.n_recorded() - 1); }

double normal_ks(const std::vector<double>& xs, double mean, double sd)
{
    return numerics::ks_one_sample(xs, [&](double x) { return numerics::normal_cdf(x, mean, sd); });
}

ProjectedCoefficients flat_coefficients(double b, double a, UniformGrid y = {})
{
    auto c = ProjectedCoefficients::zeros({0.0, 1.0}, UniformGrid::from_range(-8.0, 8.0, 33), y);
    std::fill(c.b.begin(), c.b.end(), b);
    std::fill(c.a.begin(), c.a.end(), a);
    return c;
}

} // namespace

TEST(SimulateIto, ZeroDynamicsStayPut)
{
    const auto e = simulate_ito(constant_model(0.0, 0.0, 1.0), TimeGrid(0.0, 1.0, 50), 20, 1);
    for (double v : e.values) EXPECT_EQ(v, 1.0);
}

TEST(SimulateIto, UnitDriftIsExactOnGrid)
{
    const TimeGrid g(0.0, 1.0, 64);
    const auto e = simulate_ito(constant_model(1.0, 0.0, 1.0), g, 5, 1);
    for (std::size_t p = 0; p < e.n_paths; ++p)
        for (std::size_t r = 0; r < e.n_recorded(); ++r) EXPECT_NEAR(e.state(p, r)[0], 1.0 + e.time(r), 1e-14);
}

TEST(SimulateIto, BrownianEndpointMatchesNormalCdf)
{
    SimulationOptions opt;
    opt.record_stride = 100;
    opt.threads = 4;
    const auto e = simulate_ito(constant_model(0.0, 1.0, 0.0), TimeGrid(0.0, 1.0, 100), 100000, 2024, opt);
    EXPECT_LE(normal_ks(final_marginal(e), 0.0, 1.0), 0.01);
}

TEST(SimulateIto, CompensatedPoissonMoments)
{
    const std::size_t n = 100000;
    SimulationOptions opt;
    opt.record_stride = 100;
    opt.threads = 4;
    const auto e = simulate_ito(compensated_poisson(2.0), TimeGrid(0.0, 1.0, 100), n, 99, opt);
    const auto s = numerics::mean_stats(final_marginal(e));
    EXPECT_LE(std::abs(s.mean), 3.0 * std::sqrt(2.0 / static_cast<double>(n)));
    EXPECT_GE(s.variance, 1.9);
    EXPECT_LE(s.variance, 2.1);
}

TEST(SimulateIto, AsymmetricSmallJumpsAreCompensated)
{
    // jumps of +0.5 only, rate 4: the |y| <= 1 convention subtracts 4 * 0.5 dt
    auto m = constant_model(0.0, 0.0, 0.0);
    m.jumps = PoissonDriven{LevyDensitySpec::compound_poisson(4.0, JumpLaw::atoms({{{0.5}, 1.0}})), {}, {}};
    SimulationOptions opt;
    opt.record_stride = 50;
    const std::size_t n = 40000;
    const auto e = simulate_ito(m, TimeGrid(0.0, 1.0, 50), n, 5, opt);
    const auto s = numerics::mean_stats(final_marginal(e));
    EXPECT_LE(std::abs(s.mean), 4.0 * s.standard_error);
    EXPECT_NEAR(s.variance, 4.0 * 0.25, 0.05);
}

TEST(SimulateIto, EnsembleIndependentOfThreadCount)
{
    auto m = compensated_poisson(3.0);
    m.diffusion = [](double, const History& h, std::span<double> out) { out[0] = 0.3 + 0.1 * std::tanh(h.x()); };
    SimulationOptions one, many;
    many.threads = 7;
    const TimeGrid g(0.0, 1.0, 40);
    const auto a = simulate_ito(m, g, 333, 17, one);
    const auto b = simulate_ito(m, g, 333, 17, many);
    EXPECT_TRUE(a == b);
    const auto c = simulate_ito(m, g, 333, 18, one);
    EXPECT_FALSE(a == c);
}

TEST(SimulateIto, NonFiniteOracleNamesPathAndStep)
{
    auto m = scalar_model("bad", [](double t, double, auto) { return t > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 0.0; },
                          [](double, double, auto) { return 1.0; });
    try {
        simulate_ito(m, TimeGrid(0.0, 1.0, 10), 3, 1);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("path"), std::string::npos) << msg;
        EXPECT_NE(msg.find("step"), std::string::npos) << msg;
    }
}

TEST(SimulateIto, RecordsCharacteristicsAndAux)
{
    auto m = constant_model(0.3, 0.5, 2.0);
    m.aux_dim = 1;
    m.aux_init = [](std::span<const double> x0, std::span<double> aux) { aux[0] = x0[0]; };
    m.step_hook = [](const StepContext& c, std::span<double> aux) { aux[0] += c.dt; };
    const auto e = simulate_ito(m, TimeGrid(0.0, 1.0, 8), 4, 3);
    ASSERT_TRUE(e.has_characteristics());
    ASSERT_TRUE(e.has_aux());
    for (double b : e.drift) EXPECT_EQ(b, 0.3);
    for (double a : e.diffusion_sq) EXPECT_DOUBLE_EQ(a, 0.25);
    for (std::size_t r = 0; r < e.n_recorded(); ++r) EXPECT_NEAR(e.aux[r], 2.0 + e.time(r), 1e-14);
}

TEST(SimulateIto, WeakEulerOrderOnOrnsteinUhlenbeck)
{
    // E[X_1^2] for dX = -X dt + dW, X_0 = 1; the Brownian case has no weak bias at all
    const double exact = std::exp(-2.0) + 0.5 * (1.0 - std::exp(-2.0));
    auto m = scalar_model("ou", [](double, double x, auto) { return -x; }, [](double, double, auto) { return 1.0; }, 1.0);
    SimulationOptions opt;
    opt.record_characteristics = false;
    opt.threads = 4;
    auto second_moment = [&](std::size_t steps) {
        opt.record_stride = steps;
        const auto xs = final_marginal(simulate_ito(m, TimeGrid(0.0, 1.0, steps), 1000000, 77, opt));
        double s = 0.0;
        for (double x : xs) s += x * x;
        return s / static_cast<double>(xs.size());
    };
    const double coarse = second_moment(10) - exact;
    const double fine = second_moment(20) - exact;
    const double ratio = coarse / fine;
    EXPECT_GE(ratio, 1.5);
    EXPECT_LE(ratio, 3.0);
}

TEST(SimulateIto, CompensatorDirectJumps)
{
    // intensity 1 on each of the cells at y = -1 and y = +1
    const auto y = UniformGrid::from_range(-1.0, 1.0, 21);
    auto m = constant_model(0.0, 0.0, 0.0);
    m.jumps = CompensatorDirect{[dy = y.step()](double, const History&, double yy) {
                                    return std::abs(std::abs(yy) - 1.0) < 1e-9 ? 1.0 / dy : 0.0;
                                },
                                y};
    SimulationOptions opt;
    opt.record_stride = 100;
    opt.threads = 4;
    const auto e = simulate_ito(m, TimeGrid(0.0, 1.0, 100), 100000, 4, opt);
    ASSERT_TRUE(e.has_compensator());
    const auto s = numerics::mean_stats(final_marginal(e));
    EXPECT_LE(std::abs(s.mean), 3.0 * s.standard_error);
    EXPECT_NEAR(s.variance, 2.0, 0.1);
}

TEST(SimulateProjected, ConstantCoefficientsGiveBrownianMotion)
{
    ProjectedSimulationOptions opt;
    opt.record_stride = 100;
    opt.threads = 4;
    const auto e = simulate_projected(flat_coefficients(0.0, 1.0), InitialLaw{}, TimeGrid(0.0, 1.0, 100), 100000, 8, opt);
    EXPECT_LE(normal_ks(final_marginal(e), 0.0, 1.0), 0.01);
}

TEST(SimulateProjected, OrnsteinUhlenbeckMarginal)
{
    auto c = flat_coefficients(0.0, 1.0);
    for (std::size_t k = 0; k < c.nt(); ++k)
        for (std::size_t i = 0; i < c.nz(); ++i) c.b[c.cell(k, i)] = -c.z_grid.point(i);
    ProjectedSimulationOptions opt;
    opt.record_stride = 200;
    opt.threads = 4;
    const auto e = simulate_projected(c, InitialLaw{}, TimeGrid(0.0, 1.0, 200), 100000, 9, opt);
    EXPECT_LE(normal_ks(final_marginal(e), 0.0, std::sqrt(0.5 * (1.0 - std::exp(-2.0)))), 0.01);
}

TEST(SimulateProjected, CompoundPoissonVariance)
{
    const auto y = UniformGrid::from_range(-2.0, 2.0, 41);
    auto c = flat_coefficients(0.0, 0.0, y);
    for (std::size_t k = 0; k < c.nt(); ++k)
        for (std::size_t i = 0; i < c.nz(); ++i) {
            auto row = c.kernel(k, i);
            row[y.nearest(-1.0)] = 1.0 / y.step();
            row[y.nearest(1.0)] = 1.0 / y.step();
        }
    ProjectedSimulationOptions opt;
    opt.record_stride = 100;
    opt.threads = 4;
    ProjectedSimulationStats stats;
    const auto e = simulate_projected(c, InitialLaw{}, TimeGrid(0.0, 1.0, 100), 100000, 10, opt, &stats);
    const auto s = numerics::mean_stats(final_marginal(e));
    EXPECT_GE(s.variance, 1.9);
    EXPECT_LE(s.variance, 2.1);
    EXPECT_NEAR(stats.max_lambda_dt, 0.02, 1e-12);
    EXPECT_EQ(stats.tail_jumps, 0u);
}

TEST(SimulateProjected, TailMassIsDrawnAtTheEdgeAndCounted)
{
    const auto y = UniformGrid::from_range(-1.0, 1.0, 21);
    auto c = flat_coefficients(0.0, 0.0, y);
    std::fill(c.tail_hi.begin(), c.tail_hi.end(), 0.5);
    ProjectedSimulationOptions opt;
    opt.record_stride = 50;
    ProjectedSimulationStats stats;
    const auto e = simulate_projected(c, InitialLaw{}, TimeGrid(0.0, 1.0, 50), 2000, 10, opt, &stats);
    EXPECT_GT(stats.tail_jumps, 0u);
    // every jump is +1 and the |y| <= 1 part is compensated: mean stays at 0
    const auto s = numerics::mean_stats(final_marginal(e));
    EXPECT_LE(std::abs(s.mean), 4.0 * s.standard_error);
}

TEST(SimulateProjected, IndependentOfThreadCount)
{
    auto c = flat_coefficients(0.1, 0.5, UniformGrid::from_range(-1.0, 1.0, 11));
    for (double& v : c.n) v = 0.7;
    ProjectedSimulationOptions one, many;
    many.threads = 5;
    const TimeGrid g(0.0, 1.0, 30);
    EXPECT_TRUE(simulate_projected(c, InitialLaw{}, g, 301, 3, one) == simulate_projected(c, InitialLaw{}, g, 301, 3, many));
}

TEST(SimulateProjected, WarnsOnCoarseThinning)
{
    auto c = flat_coefficients(0.0, 0.1, UniformGrid::from_range(-1.0, 1.0, 11));
    for (double& v : c.n) v = 10.0;  // Lambda = 10 * 2.2 per unit time
    ProjectedSimulationStats stats;
    simulate_projected(c, InitialLaw{}, TimeGrid(0.0, 1.0, 10), 10, 1, {}, &stats);
    EXPECT_GT(stats.max_lambda_dt, 0.5);
    EXPECT_FALSE(stats.warnings.empty());
}
