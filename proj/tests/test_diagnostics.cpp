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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "mproj/diagnostics/diagnostics.hpp"
#include "mproj/simulate/simulate.hpp"
#include "support.hpp"

using namespace mproj;
using test_support::Gen;

namespace {

std::vector<double> normals(Gen& g, std::size_t n, double mean = 0.0)
{
    std::vector<double> v(n);
    for (double& x : v) x = mean + g.normal();
    return v;
}

LevyDensitySpec laplace(double intensity)
{
    return LevyDensitySpec::compound_poisson(
        intensity, JumpLaw::density([](double y) { return 0.5 * std::exp(-std::abs(y)); }, -numerics::kInf,
                                    numerics::kInf));
}

ItoModel jump_model(double beta, double delta, LevyDensitySpec levy)
{
    auto m = scalar_model("jumps", [beta](double, double, auto) { return beta; },
                          [delta](double, double, auto) { return delta; });
    m.jumps = PoissonDriven{std::move(levy), {}, {}};
    return m;
}

} // namespace

TEST(Marginals, IdenticalSamplesHaveZeroDistance)
{
    Gen g(1);
    const auto a = normals(g, 500);
    const auto e = compare_marginals(a, a, 0.5);
    EXPECT_EQ(e.ks, 0.0);
    EXPECT_EQ(e.w1, 0.0);
    EXPECT_EQ(e.moments_sample, e.moments_reference);
}

TEST(Marginals, DistancesAreSymmetric)
{
    Gen g(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = normals(g, 100 + g.index(400), g.uniform(-1.0, 1.0));
        auto b = normals(g, 100 + g.index(400));
        b[3] = a[5];  // a tie across samples
        const auto ab = compare_marginals(a, b, 0.0);
        const auto ba = compare_marginals(b, a, 0.0);
        EXPECT_EQ(ab.ks, ba.ks);
        EXPECT_NEAR(ab.w1, ba.w1, 1e-14);
    }
}

TEST(Marginals, ShiftingASampleMovesW1ByTheShift)
{
    Gen g(3);
    const auto a = normals(g, 1000);
    for (double c : {0.01, 0.3, 2.0}) {
        std::vector<double> b(a);
        for (double& v : b) v += c;
        EXPECT_NEAR(numerics::w1_two_sample(a, b), c, 1e-12);
    }
}

TEST(Marginals, NormalShiftW1)
{
    Gen g(4);
    const auto a = normals(g, 100000);
    const auto b = normals(g, 100000, 0.1);
    const double w = compare_marginals(a, b, 1.0).w1;
    EXPECT_GE(w, 0.095);
    EXPECT_LE(w, 0.105);
}

TEST(Marginals, BrownianAgainstExactLaw)
{
    const auto m = scalar_model("bm", [](double, double, auto) { return 0.0; }, [](double, double, auto) { return 1.0; });
    SimulationOptions so;
    so.record_characteristics = false;
    const auto e = simulate_ito(m, TimeGrid(0.0, 1.0, 20), 20000, 99, so);
    const auto x = e.marginal(e.n_recorded() - 1);
    const boost::math::normal_distribution<double> n01;
    const auto r = compare_marginals(
        x, [&](double v) { return boost::math::cdf(n01, v); }, [&](double u) { return boost::math::quantile(n01, u); },
        1.0);
    EXPECT_LE(r.ks, 0.015);
    EXPECT_LE(r.w1, 0.03);
    EXPECT_NEAR(r.moments_reference[1], 1.0, 1e-3);
    EXPECT_NEAR(r.moments_reference[3], 3.0, 2e-2);
    EXPECT_EQ(r.reference, "cdf");
}

TEST(Marginals, SampleAgainstDensityField)
{
    Gen g(5);
    const auto x = normals(g, 20000, 0.5);
    const auto d = DensityField::gaussian(UniformGrid::from_step(-6.0, 7.0, 0.005), 0.5, 1.0, 1.0);
    const auto r = compare_marginals(x, d, 0);
    EXPECT_LE(r.ks, 0.015);
    EXPECT_EQ(r.t, 1.0);
    EXPECT_NEAR(r.moments_reference[0], 0.5, 1e-6);
    EXPECT_NEAR(r.moments_reference[1], 1.25, 1e-5);
    EXPECT_NEAR(l1_distance(d, 0, [](double v) { return numerics::normal_pdf(v, 0.5, 1.0); }), 0.0,
                1e-6);
}

TEST(Marginals, RejectsTinyOrNaNSamples)
{
    std::vector<double> small(99, 0.0), ok(200, 0.0);
    EXPECT_THROW(compare_marginals(small, ok, 0.0), ConfigError);
    ok[17] = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> clean(200, 0.0);
    EXPECT_THROW(compare_marginals(clean, ok, 0.0), NumericError);
}

TEST(Marginals, ReportJson)
{
    Gen g(6);
    const auto a = normals(g, 300);
    const auto b = normals(g, 300);
    MimicReport rep;
    rep.route = "simulate";
    rep.ks_tolerance = 0.5;
    rep.entries.push_back(compare_marginals(a, b, 0.25));
    rep.entries.push_back(compare_marginals(b, a, 1.0));
    const auto j = to_json(rep);
    EXPECT_EQ(j.at("route"), "simulate");
    EXPECT_TRUE(j.at("passed").get<bool>());
    EXPECT_EQ(j.at("entries").size(), 2u);
    EXPECT_DOUBLE_EQ(j.at("max_ks").get<double>(), rep.entries[0].ks);
    rep.ks_tolerance = rep.max_ks() / 2.0;
    EXPECT_FALSE(rep.passed());
}

TEST(Martingale, CompensatedJumpsPassAndDriftFails)
{
    const TimeGrid grid(0.0, 1.0, 50);
    const auto mart = simulate_ito(jump_model(0.0, 0.5, laplace(2.0)), grid, 20000, 17);
    const auto ok = check_martingale_preservation(mart, {0.25, 0.5, 1.0});
    EXPECT_TRUE(ok.passed());
    ASSERT_EQ(ok.checkpoints.size(), 3u);
    EXPECT_DOUBLE_EQ(ok.checkpoints[2].t, 1.0);

    const auto drift = simulate_ito(jump_model(0.5, 0.5, laplace(2.0)), grid, 20000, 17);
    const auto bad = check_martingale_preservation(drift, {0.25, 0.5, 1.0});
    EXPECT_FALSE(bad.passed());
    EXPECT_GT(bad.checkpoints[2].z_score, 10.0);
}

TEST(Martingale, DeterministicPathsNeedExactConstancy)
{
    const auto flat = simulate_ito(scalar_model("zero", [](double, double, auto) { return 0.0; },
                                                [](double, double, auto) { return 0.0; }, 1.5),
                                   TimeGrid(0.0, 1.0, 10), 10, 1);
    EXPECT_TRUE(check_martingale_preservation(flat, {0.5, 1.0}).passed());
    const auto moving = simulate_ito(scalar_model("unit", [](double, double, auto) { return 1.0; },
                                                  [](double, double, auto) { return 0.0; }),
                                     TimeGrid(0.0, 1.0, 10), 10, 1);
    const auto r = check_martingale_preservation(moving, {1.0});
    EXPECT_FALSE(r.passed());
    EXPECT_GT(r.checkpoints[0].z_score, 1e6);  // the standard error is rounding noise
}

TEST(Audit, BoundedEllipticModelPasses)
{
    auto m = scalar_model("ou", [](double, double x, auto) { return -0.1 * std::tanh(x); },
                          [](double, double, auto) { return 1.0; });
    const auto e = simulate_ito(m, TimeGrid(0.0, 1.0, 20), 200, 5);
    AssumptionAuditConfig cfg;
    cfg.k1 = 2.0;
    const auto rep = audit_assumptions(m, e, cfg);
    EXPECT_TRUE(rep.passed());
    EXPECT_TRUE(rep.find("H1")->passed);
    EXPECT_TRUE(rep.find("A3")->passed);
    cfg.k1 = 0.5;
    const auto tight = audit_assumptions(m, e, cfg);
    EXPECT_FALSE(tight.passed());
    EXPECT_FALSE(tight.find("H1")->passed);
}

TEST(Audit, PureFiniteJumpsFailNonDegeneracy)
{
    const auto m = jump_model(0.0, 0.0, laplace(1.0));
    const auto e = simulate_ito(m, TimeGrid(0.0, 1.0, 10), 100, 3);
    const auto rep = audit_assumptions(m, e);
    EXPECT_FALSE(rep.passed());
    const auto* a3 = rep.find("A3");
    ASSERT_NE(a3, nullptr);
    EXPECT_FALSE(a3->passed);
    EXPECT_NE(a3->message.find("Assumption 3"), std::string::npos);
    EXPECT_NE(a3->title.find("Assumption 3"), std::string::npos);
}

TEST(Audit, LaplaceTailsDecayExponentially)
{
    const auto m = jump_model(0.0, 1.0, laplace(1.0));
    const auto e = simulate_ito(m, TimeGrid(0.0, 1.0, 10), 100, 3);
    AssumptionAuditConfig cfg;
    cfg.tail_tolerance = 1e-3;
    const auto rep = audit_assumptions(m, e, cfg);
    const auto* h2 = rep.find("H2");
    ASSERT_NE(h2, nullptr);
    const auto tails = h2->measured.at("tail_masses").get<std::vector<double>>();
    ASSERT_EQ(tails.size(), cfg.tail_radii.size());
    for (std::size_t r = 0; r < tails.size(); ++r) EXPECT_NEAR(tails[r], std::exp(-cfg.tail_radii[r]), 1e-8);
    EXPECT_NEAR(h2->measured.at("sup_integrability").get<double>(), 2.0 - 4.0 / std::exp(1.0), 1e-8);
    EXPECT_TRUE(h2->passed);
    cfg.tail_tolerance = 1e-4;  // e^-8 > 1e-4
    EXPECT_FALSE(audit_assumptions(m, e, cfg).find("H2")->passed);
}

TEST(Audit, DeterministicJson)
{
    const auto m = jump_model(0.2, 0.7, laplace(1.5));
    const auto e = simulate_ito(m, TimeGrid(0.0, 1.0, 10), 300, 8);
    const auto a = to_json(audit_assumptions(m, e)).dump();
    const auto b = to_json(audit_assumptions(m, e)).dump();
    EXPECT_EQ(a, b);
    EXPECT_NE(a.find("\"schema_version\":1"), std::string::npos);
}

TEST(Audit, CoefficientsWithDeclaredStableTail)
{
    auto c = ProjectedCoefficients::zeros({0.0, 1.0}, UniformGrid::from_range(-1.0, 1.0, 5),
                                          UniformGrid::from_range(-2.0, 2.0, 9));
    AssumptionAuditConfig cfg;
    auto rep = audit_assumptions(c, cfg);
    EXPECT_FALSE(rep.find("A3")->passed);
    cfg.declared_stable = StableTail{.c = 0.3, .exponent = 1.5};
    rep = audit_assumptions(c, cfg);
    EXPECT_TRUE(rep.find("A3")->passed);
    EXPECT_TRUE(rep.find("A2")->heuristic);
}

TEST(Audit, ContinuityHeuristicNeverFailsTheReport)
{
    auto c = ProjectedCoefficients::zeros({0.0, 1.0}, UniformGrid::from_range(-1.0, 1.0, 5));
    for (std::size_t q = 0; q < c.a.size(); ++q) c.a[q] = 1.0 + (q % 2 ? 5.0 : 0.0);
    AssumptionAuditConfig cfg;
    cfg.lipschitz_bound = 1.0;
    const auto rep = audit_assumptions(c, cfg);
    EXPECT_FALSE(rep.find("A2")->passed);
    EXPECT_TRUE(rep.passed());
}
