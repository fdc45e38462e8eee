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

// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mproj/cli/pipeline.hpp"
#include "mproj/compensator/compensator.hpp"
#include "mproj/numerics/quadrature.hpp"
#include "mproj/numerics/statistics.hpp"
#include "mproj/pide/pide.hpp"
#include "mproj/projection/estimator.hpp"
#include "mproj/projection/function_of_markov.hpp"
#include "mproj/simulate/simulate.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mproj;
using test_support::TempDir;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

class Detail {
public:
    template <class T>
    Detail& operator()(const std::string& key, T v)
    {
        ss_ << (first_ ? "" : ", ") << key << "=" << v;
        first_ = false;
        return *this;
    }
    std::string str() const { return ss_.str(); }

private:
    std::ostringstream ss_;
    bool first_ = true;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

cli::RunConfig config(const std::string& name) { return cli::load_config(std::string(MPROJ_CONFIG_DIR) + "/" + name); }

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double phi(double x) { return numerics::normal_pdf(x); }

Outcome brownian()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = scalar_model("bm", [](double, double, auto) { return 0.0; }, [](double, double, auto) { return 1.0; });
    SimulationOptions so;
    so.record_stride = 100;
    const auto e = simulate_ito(m, TimeGrid(0.0, 1.0, 100), 100000, 101, so);
    const auto x = e.marginal(e.n_recorded() - 1);
    const double ks = numerics::ks_one_sample(x, [](double v) { return numerics::normal_cdf(v); });
    const double s = seconds_since(t0);
    return {ks <= 0.01 && s < 10.0, Detail()("ks", ks)("seconds", s).str()};
}

double heat_l1(double dx, double dt, PideDiagnostics* diag)
{
    const auto x = UniformGrid::from_step(-6.0, 6.0, dx);
    PideOptions opt;
    opt.x_grid = x;
    opt.time = TimeGrid(0.0, 1.0, static_cast<std::size_t>(std::llround(1.0 / dt)));
    const auto p = evolve_forward(DensityField::gaussian(x, 0.0, 0.05), test_support::constant_coefficients(0.0, 1.0),
                                  opt, diag);
    const double sd = std::sqrt(0.05 * 0.05 + 1.0);
    return test_support::l1_to(p, p.nt() - 1, [&](double v) { return numerics::normal_pdf(v, 0.0, sd); });
}

Outcome heat()
{
    const auto t0 = std::chrono::steady_clock::now();
    PideDiagnostics diag;
    const double fine = heat_l1(0.01, 1e-3, &diag);
    const double s = seconds_since(t0);
    const double coarse = heat_l1(0.02, 2e-3, nullptr);
    const double ratio = coarse / fine;
    const bool ok = fine <= 5e-3 && diag.max_mass_drift <= 1e-3 && ratio >= 1.5 && ratio <= 4.5 && s < 30.0;
    return {ok, Detail()("l1", fine)("mass_drift", diag.max_mass_drift)("ratio", ratio)("seconds", s).str()};
}

Outcome compound_poisson_pide()
{
    const auto x = UniformGrid::from_step(-5.0, 5.0, 0.01);
    const auto y = UniformGrid::from_range(-1.0, 1.0, 3);
    const auto c = test_support::constant_coefficients(0.0, 0.0, y, {0.5, 0.0, 0.5});
    const auto p0 = DensityField::gaussian(x, 0.0, 0.1);
    PideOptions opt;
    opt.x_grid = x;
    opt.time = TimeGrid(0.0, 0.5, 500);
    opt.generator.allow_degenerate = true;
    const auto p = evolve_forward(p0, c, opt);
    const auto series = test_support::symmetric_unit_jump_series(p0, 1.0, 0.5, 6);
    double l1 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) l1 += std::abs(p.row(1)[i] - series[i]) * x.step();
    return {l1 <= 1e-2, Detail()("l1", l1).str()};
}

Outcome pushforward()
{
    auto laplace = [](double y) { return 0.5 * std::exp(-std::abs(y)); };
    AmplitudeMap map;
    map.psi = [](double z) { return 2.0 * z; };
    map.domain_lo = -60.0;
    map.domain_hi = 60.0;
    const PushforwardDensity m(map, laplace);
    double worst = 0.0;
    for (double u = -20.0; u <= 20.0; u += 0.0731) {
        if (std::abs(u) < 1e-12) continue;
        worst = std::max(worst, std::abs(m(u) - 0.25 * std::exp(-0.5 * std::abs(u))));
    }
    const auto nu = LevyDensitySpec::compound_poisson(1.0, JumpLaw::density(laplace, -numerics::kInf, numerics::kInf));
    test_support::Gen gen(44);
    double worst_z = 0.0;
    for (int q = 0; q < 10; ++q) {
        const double lo = gen.uniform(0.1, 4.0), width = gen.uniform(0.2, 4.0);
        const bool positive = gen.uniform(0.0, 1.0) < 0.5;
        const double a = positive ? lo : -lo - width, b = positive ? lo + width : -lo;
        const double integral = integrate_pushforward(m, a, b);
        const auto est = pushforward_set_mass(map.psi, nu, a, b, 200000, gen.u64());
        worst_z = std::max(worst_z, std::abs(integral - est.mass) / est.standard_error);
    }
    return {worst <= 1e-10 && worst_z <= 3.0, Detail()("max_density_error", worst)("max_z", worst_z).str()};
}

Outcome slice()
{
    SliceProblem p;
    p.dim = 2;
    p.density = [](std::span<const double> z) { return phi(z[0]) * phi(z[1]); };
    p.f = [](std::span<const double> z) { return z[0] + z[1]; };
    p.df_dlast = [](std::span<const double>) { return 1.0; };
    p.inverse = [](std::span<const double> head, double w) { return w - head[0]; };
    auto first = [](std::span<const double> z) { return z[0]; };

    // Monte Carlo: Gaussian-kernel conditioning on z1 + z2 = w over 10^6 draws
    const std::vector<double> ws{-0.8, 0.0, 0.4, 0.8};
    std::vector<double> num(ws.size(), 0.0), den(ws.size(), 0.0);
    test_support::Gen gen(55);
    const double h = 0.08;
    for (int n = 0; n < 1000000; ++n) {
        const double z1 = gen.normal(), z2 = gen.normal();
        for (std::size_t q = 0; q < ws.size(); ++q) {
            const double u = (z1 + z2 - ws[q]) / h;
            const double k = std::exp(-0.5 * u * u);
            num[q] += k * z1;
            den[q] += k;
        }
    }
    double quad_err = 0.0, mc_err = 0.0;
    for (std::size_t q = 0; q < ws.size(); ++q) {
        const double v = conditional_expectation_slice(p, first, ws[q]);
        quad_err = std::max(quad_err, std::abs(v - 0.5 * ws[q]));
        mc_err = std::max(mc_err, std::abs(v - num[q] / den[q]));
    }
    return {quad_err <= 1e-6 && mc_err <= 1e-2, Detail()("quadrature_error", quad_err)("mc_error", mc_err).str()};
}

Outcome ou_sum()
{
    FunctionOfMarkovSpec s;
    s.dim = 2;
    s.noise_dim = 2;
    s.drift = [](double, std::span<const double> z, std::span<double> out) {
        out[0] = -z[0];
        out[1] = -z[1];
    };
    s.diffusion = [](double, std::span<const double>, std::span<double> out) {
        out[0] = out[3] = 1.0;
        out[1] = out[2] = 0.0;
    };
    s.f = [](std::span<const double> z) { return z[0] + z[1]; };
    s.gradient = [](std::span<const double>, std::span<double> out) { out[0] = out[1] = 1.0; };
    s.hessian = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
    s.inverse = [](std::span<const double> head, double w) { return w - head[0]; };
    s.density = [](double t, std::span<const double> z) {
        const double sd = std::sqrt(0.5 * (1.0 - std::exp(-2.0 * t)));
        return phi(z[0] / sd) * phi(z[1] / sd) / (sd * sd);
    };
    FunctionOfMarkovOptions opt;
    opt.times = {0.25, 0.5, 1.0};
    opt.w_grid = UniformGrid::from_range(-2.0, 2.0, 41);
    const auto c = project_function_of_markov(s, opt);
    double eb = 0.0, ea = 0.0;
    for (std::size_t k = 0; k < c.nt(); ++k)
        for (std::size_t i = 0; i < c.nz(); ++i) {
            eb = std::max(eb, std::abs(c.b[c.cell(k, i)] + c.z_grid.point(i)));
            ea = std::max(ea, std::abs(c.a[c.cell(k, i)] - 2.0));
        }
    return {eb <= 1e-6 && ea <= 1e-6, Detail()("max_b_error", eb)("max_a_error", ea).str()};
}

Outcome time_change(const TempDir& dir)
{
    const auto c = config("time_change.json");
    const auto r = cli::run_command("mimic", c, dir.file("tc"));
    const auto& alpha = r.report["projection"]["alpha"];
    const auto& z = c.projection.z_grid;
    const std::size_t nt = alpha.size() / z.size();
    const double t_end = c.time.t_end;
    double worst = 0.0;
    for (std::size_t k = 0; k < nt; ++k) {
        const double t = t_end * static_cast<double>(k) / static_cast<double>(nt - 1);
        for (std::size_t i = 0; i < z.size(); ++i)
            if (std::abs(z.point(i)) <= 1.0)
                worst = std::max(worst, std::abs(alpha[k * z.size() + i].get<double>() / (1.0 + t) - 1.0));
    }
    double l1 = -1.0;
    for (const auto& e : r.report["exact"])
        if (e["t"].get<double>() == 1.0) l1 = e["l1"].get<double>();
    return {worst <= 0.05 && l1 >= 0.0 && l1 <= 1e-2, Detail()("max_alpha_rel_error", worst)("l1_t1", l1).str()};
}

Outcome involutivity(const TempDir& dir)
{
    const auto c = config("local_vol.json");
    const auto b = cli::build_model(c.model);
    const cli::Seeds seeds(c.seed);
    const auto run = cli::detail::simulate_source(b, c, seeds, c.mimic.checkpoints, "mimic.checkpoints", true);
    EstimatorOptions eo;
    eo.z_grid = c.projection.z_grid;
    eo.bandwidth = c.projection.bandwidth;
    eo.min_effective = c.projection.min_effective;
    EstimationReport rep;
    const auto co = estimate_projected_coefficients(run.ensemble, eo, &rep);
    auto sigma = [](double z) { return 0.2 + 0.1 * std::tanh(z); };
    double worst = 0.0;
    std::size_t bins = 0;
    for (std::size_t k = 1; k < co.nt(); ++k)
        for (std::size_t i = 0; i < co.nz(); ++i) {
            if (rep.effective[co.cell(k, i)] < 500.0) continue;
            const double s2 = sigma(co.z_grid.point(i)) * sigma(co.z_grid.point(i));
            worst = std::max(worst, std::abs(co.a[co.cell(k, i)] / s2 - 1.0));
            ++bins;
        }
    const auto r = cli::run_command("mimic", c, dir.file("lv"));
    const double ks = r.report["routes"]["resimulate"]["max_ks"].get<double>();
    return {bins > 0 && worst <= 0.10 && ks <= 0.02,
            Detail()("bins", bins)("max_a_rel_error", worst)("max_ks", ks).str()};
}

Outcome headline(const TempDir& dir)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = config("running_average_vol.json");
    const auto r = cli::run_command("mimic", c, dir.file("rav"));
    const double s = seconds_since(t0);
    const double ks_pide = r.report["routes"]["pide"]["max_ks"].get<double>();
    const double ks_resim = r.report["routes"]["resimulate"]["max_ks"].get<double>();
    const double agree = r.report["route_agreement"]["max_ks"].get<double>();
    const bool ok = ks_pide <= 0.02 && ks_resim <= 0.02 && agree <= 0.01 && s < 300.0;
    return {ok, Detail()("ks_pide", ks_pide)("ks_resimulate", ks_resim)("route_agreement", agree)("seconds", s).str()};
}

Outcome martingale(const TempDir& dir)
{
    const auto r = cli::run_command("mimic", config("compound_poisson_martingale.json"), dir.file("cp"));
    const auto& m = r.report["martingale"];
    double worst_src = 0.0, worst_proj = 0.0;
    for (const auto& e : m["source"]["checkpoints"]) worst_src = std::max(worst_src, std::abs(e["z_score"].get<double>()));
    for (const auto& e : m["resimulate"]["checkpoints"])
        worst_proj = std::max(worst_proj, std::abs(e["z_score"].get<double>()));
    const bool ok = m["source"]["passed"].get<bool>() && m["resimulate"]["passed"].get<bool>();
    return {ok, Detail()("max_z_source", worst_src)("max_z_projection", worst_proj).str()};
}

Outcome duality()
{
    test_support::Gen gen(2027);
    const auto x = UniformGrid::from_range(-5.0, 5.0, 101);
    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
        const auto c = test_support::random_coefficients(gen);
        const auto g = build_generator_matrix(c, x, gen.uniform(0.0, 1.0));
        std::vector<double> f(x.size()), p(x.size());
        for (double& v : f) v = gen.normal();
        for (double& v : p) v = gen.uniform(0.0, 1.0);
        const auto lf = g.apply(f);
        const auto ltp = g.apply_transpose(p);
        const double lhs = std::inner_product(lf.begin(), lf.end(), p.begin(), 0.0);
        const double rhs = std::inner_product(f.begin(), f.end(), ltp.begin(), 0.0);
        const double nf = std::sqrt(std::inner_product(f.begin(), f.end(), f.begin(), 0.0));
        const double np = std::sqrt(std::inner_product(p.begin(), p.end(), p.begin(), 0.0));
        worst = std::max(worst, std::abs(lhs - rhs) / (nf * np));
    }
    return {worst <= 1e-12, Detail()("max_relative_gap", worst).str()};
}

Outcome determinism(const TempDir& dir)
{
    auto c = config("running_average_vol.json");
    c.threads = 1;
    cli::run_command("mimic", c, dir.file("det1"));
    c.threads = 2;
    cli::run_command("mimic", c, dir.file("det2"));
    const auto a = slurp(dir.file("det1/report.json"));
    const auto b = slurp(dir.file("det2/report.json"));
    return {!a.empty() && a == b, Detail()("bytes", a.size())("threads", "1 vs 2").str()};
}

} // namespace

int main()
{
    TempDir dir("acceptance");
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"Brownian sanity", brownian},
        {"heat-equation PIDE", heat},
        {"compound-Poisson PIDE vs convolution series", compound_poisson_pide},
        {"pushforward of a linear amplitude", pushforward},
        {"conditional expectation on a slice", slice},
        {"closed-form projection of an OU sum", ou_sum},
        {"deterministic time change", [&] { return time_change(dir); }},
        {"involutivity on local volatility", [&] { return involutivity(dir); }},
        {"path-dependent volatility is mimicked", [&] { return headline(dir); }},
        {"martingale preservation", [&] { return martingale(dir); }},
        {"discrete duality", duality},
        {"deterministic reports", [&] { return determinism(dir); }},
    };
    int failures = 0;
    for (std::size_t q = 0; q < criteria.size(); ++q) {
        Outcome o;
        try {
            o = criteria[q].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.passed ? 0 : 1;
        std::printf("criterion %2zu: %s  %s  [%s]\n", q + 1, o.passed ? "PASS" : "FAIL", criteria[q].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
