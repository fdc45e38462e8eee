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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mproj/cli/config.hpp"
#include "mproj/core/density.hpp"
#include "mproj/core/model.hpp"
#include "mproj/projection/function_of_markov.hpp"

namespace mproj::cli {

struct NormalLaw {
    double mean = 0.0;
    double sd = 0.0;
};

/// A registry entry resolved against its parameters: the source model, how
/// to read xi off its state, the law of xi_0 and whatever the projection
/// methods need.
struct ModelBundle {
    ItoModel model;
    std::function<double(std::span<const double>)> observe = [](std::span<const double> s) { return s[0]; };
    InitialLaw xi_initial;
    std::function<DensityField(const UniformGrid&)> initial_density;
    std::string default_method = "estimate";
    std::optional<TimeChangeSpec> time_change;
    std::optional<FunctionOfMarkovSpec> function_of_markov;
    std::function<std::optional<NormalLaw>(double t)> exact = [](double) { return std::optional<NormalLaw>{}; };
};

inline const std::vector<std::string>& model_names()
{
    static const std::vector<std::string> names{"zero",           "constant",        "brownian",
                                                "ou",             "local-vol",       "running-average-vol",
                                                "ou2-sum",        "time-changed-levy", "compound-poisson"};
    return names;
}

namespace detail {

using Fn = std::function<double(double, double, std::span<const double>)>;

inline Fn constant_fn(double v)
{
    return [v](double, double, std::span<const double>) { return v; };
}

inline void point_start(ModelBundle& b, double x0)
{
    b.model.initial.point = {x0};
    b.xi_initial.point = {x0};
    b.initial_density = [x0](const UniformGrid& g) { return DensityField::point_mass(g, x0); };
}

inline ModelBundle scalar(const std::string& name, Fn beta, Fn delta, double x0)
{
    ModelBundle b;
    b.model = scalar_model(name, std::move(beta), std::move(delta), x0);
    point_start(b, x0);
    return b;
}

inline ModelBundle build_ou2_sum(const Node& p, double x0)
{
    p.only({"kappa", "sigma", "stationary", "z0"});
    const double kappa = p.positive("kappa", 1.0), sigma = p.positive("sigma", 1.0);
    const bool stationary = p.flag("stationary", true);
    auto z0 = p.numbers("z0", {x0, 0.0});
    if (z0.size() != 2) p.at("z0").fail("needs two entries");
    if (stationary && p.has("z0")) p.at("z0").fail("only used when stationary is false");

    // per-coordinate mean and variance of Z_t
    auto law = [=](double t) {
        if (stationary) return std::array<double, 3>{0.0, 0.0, sigma * sigma / (2.0 * kappa)};
        const double e = std::exp(-kappa * t);
        return std::array<double, 3>{z0[0] * e, z0[1] * e, sigma * sigma * (1.0 - e * e) / (2.0 * kappa)};
    };

    ModelBundle b;
    b.default_method = "closed-form";
    auto& m = b.model;
    m.name = "ou2-sum";
    m.dim = 2;
    m.noise_dim = 2;
    m.drift = [kappa](double, const History& h, std::span<double> out) {
        out[0] = -kappa * h.state[0];
        out[1] = -kappa * h.state[1];
    };
    m.diffusion = [sigma](double, const History&, std::span<double> out) {
        out[0] = sigma;
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = sigma;
    };
    b.observe = [](std::span<const double> s) { return s[0] + s[1]; };
    if (stationary) {
        const double sd = std::sqrt(law(0.0)[2]);
        m.initial.sampler = [sd](StreamRng& rng, std::span<double> out) {
            out[0] = sd * rng.normal();
            out[1] = sd * rng.normal();
        };
        b.xi_initial.sampler = [sd](StreamRng& rng, std::span<double> out) { out[0] = std::sqrt(2.0) * sd * rng.normal(); };
        b.initial_density = [sd](const UniformGrid& g) { return DensityField::gaussian(g, 0.0, std::sqrt(2.0) * sd); };
    } else {
        m.initial.point = z0;
        const double s = z0[0] + z0[1];
        b.xi_initial.point = {s};
        b.initial_density = [s](const UniformGrid& g) { return DensityField::point_mass(g, s); };
    }
    b.exact = [law](double t) -> std::optional<NormalLaw> {
        const auto l = law(t);
        if (!(l[2] > 0.0)) return std::nullopt;
        return NormalLaw{l[0] + l[1], std::sqrt(2.0 * l[2])};
    };

    FunctionOfMarkovSpec f;
    f.dim = 2;
    f.noise_dim = 2;
    f.drift = [kappa](double, std::span<const double> z, std::span<double> out) {
        out[0] = -kappa * z[0];
        out[1] = -kappa * z[1];
    };
    f.diffusion = [sigma](double, std::span<const double>, std::span<double> out) {
        out[0] = sigma;
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = sigma;
    };
    f.f = [](std::span<const double> z) { return z[0] + z[1]; };
    f.gradient = [](std::span<const double>, std::span<double> out) { out[0] = out[1] = 1.0; };
    f.hessian = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
    f.inverse = [](std::span<const double> head, double w) { return w - head[0]; };
    f.density = [law](double t, std::span<const double> z) {
        const auto l = law(t);
        return numerics::normal_pdf(z[0], l[0], std::sqrt(l[2])) * numerics::normal_pdf(z[1], l[1], std::sqrt(l[2]));
    };
    b.function_of_markov = std::move(f);
    return b;
}

inline ModelBundle build_time_changed(const Node& p, double x0)
{
    p.only({"b", "sigma", "rate", "jumps"});
    TimeChangeSpec spec;
    spec.b = p.number("b", 0.0);
    spec.sigma = p.number("sigma", 1.0);
    if (!(spec.sigma >= 0.0)) p.at("sigma").fail("must be >= 0");
    if (p.has("jumps")) spec.levy = parse_levy(p.at("jumps"));

    std::string kind = "affine";
    double a0 = 1.0, a1 = 1.0, eta = 1.0;
    if (p.has("rate")) {
        const Node r = p.at("rate");
        kind = r.choice("kind", "affine", {"affine", "exp-bm"});
        if (kind == "affine") {
            r.only({"kind", "a0", "a1"});
            a0 = r.number("a0", 1.0);
            a1 = r.number("a1", 1.0);
            if (!(a0 > 0.0) || !(a1 >= 0.0)) r.fail("affine rate needs a0 > 0 and a1 >= 0");
        } else {
            r.only({"kind", "eta"});
            eta = r.number("eta", 1.0);
        }
    }
    ModelBundle b;
    b.default_method = "time-change";
    auto& m = b.model;
    m.name = "time-changed-levy";
    point_start(b, x0);
    RateFn theta;
    if (kind == "affine") {
        theta = [a0, a1](double t, const History&) { return a0 + a1 * t; };
        if (!spec.levy) {
            const double drift = spec.b, sig = spec.sigma;
            b.exact = [=](double t) -> std::optional<NormalLaw> {
                const double cum = a0 * t + 0.5 * a1 * t * t;
                if (!(sig > 0.0 && cum > 0.0)) return std::nullopt;
                return NormalLaw{x0 + drift * cum, sig * std::sqrt(cum)};
            };
        }
        m.noise_dim = 1;
    } else {
        // theta = exp(eta B' - eta^2 t / 2) with B' an independent Brownian motion in aux
        theta = [eta](double t, const History& h) { return std::exp(eta * h.aux[0] - 0.5 * eta * eta * t); };
        m.noise_dim = 2;
        m.aux_dim = 1;
        m.aux_init = [](std::span<const double>, std::span<double> aux) { aux[0] = 0.0; };
        m.step_hook = [](const StepContext& c, std::span<double> aux) { aux[0] += std::sqrt(c.dt) * c.gaussian[1]; };
    }
    spec.rate = theta;
    const double bb = spec.b, sig = spec.sigma;
    const std::size_t nn = m.noise_dim;
    m.drift = [bb, theta](double t, const History& h, std::span<double> out) { out[0] = bb * theta(t, h); };
    m.diffusion = [sig, theta, nn](double t, const History& h, std::span<double> out) {
        out[0] = sig * std::sqrt(theta(t, h));
        for (std::size_t c = 1; c < nn; ++c) out[c] = 0.0;
    };
    if (spec.levy) m.jumps = PoissonDriven{*spec.levy, {}, theta};
    b.time_change = std::move(spec);
    return b;
}

} // namespace detail

/// Resolve a registry name and its parameter block.
inline ModelBundle build_model(const ModelConfig& mc)
{
    const Node p(mc.params, "model.params");
    const double x0 = mc.x0;
    using detail::constant_fn;
    ModelBundle b;
    if (mc.name == "zero") {
        p.only({});
        b = detail::scalar("zero", constant_fn(0.0), constant_fn(0.0), x0);
        b.model.drift_bound = 0.0;
        b.model.diffusion_bound = 0.0;
    } else if (mc.name == "constant" || mc.name == "brownian") {
        p.only({"beta", "sigma"});
        const double beta = p.number("beta", 0.0), sigma = p.number("sigma", 1.0);
        if (!(sigma >= 0.0)) p.at("sigma").fail("must be >= 0");
        b = detail::scalar(mc.name, constant_fn(beta), constant_fn(sigma), x0);
        b.model.drift_bound = std::abs(beta);
        b.model.diffusion_bound = sigma;
        if (sigma > 0.0)
            b.exact = [=](double t) -> std::optional<NormalLaw> {
                if (!(t > 0.0)) return std::nullopt;
                return NormalLaw{x0 + beta * t, sigma * std::sqrt(t)};
            };
    } else if (mc.name == "ou") {
        p.only({"kappa", "theta", "sigma"});
        const double kappa = p.positive("kappa", 1.0), theta = p.number("theta", 0.0), sigma = p.positive("sigma", 1.0);
        b = detail::scalar(
            "ou", [=](double, double x, std::span<const double>) { return kappa * (theta - x); }, constant_fn(sigma), x0);
        b.exact = [=](double t) -> std::optional<NormalLaw> {
            if (!(t > 0.0)) return std::nullopt;
            const double e = std::exp(-kappa * t);
            return NormalLaw{theta + (x0 - theta) * e, sigma * std::sqrt((1.0 - e * e) / (2.0 * kappa))};
        };
    } else if (mc.name == "local-vol") {
        p.only({"beta", "s0", "s1"});
        const double beta = p.number("beta", 0.0), s0 = p.number("s0", 0.2), s1 = p.number("s1", 0.1);
        if (!(s0 - std::abs(s1) > 0.0)) p.fail("local vol s0 + s1 tanh(z) must stay positive: need s0 > |s1|");
        b = detail::scalar(
            "local-vol", constant_fn(beta),
            [=](double, double x, std::span<const double>) { return s0 + s1 * std::tanh(x); }, x0);
        b.model.drift_bound = std::abs(beta);
        b.model.diffusion_bound = s0 + std::abs(s1);
    } else if (mc.name == "running-average-vol") {
        p.only({"beta", "c0", "c1"});
        const double beta = p.number("beta", 0.0), c0 = p.positive("c0", 0.2), c1 = p.number("c1", 0.1);
        if (!(c1 >= 0.0)) p.at("c1").fail("must be >= 0");
        // aux[0] = int_0^t xi ds (trapezoid per step); the running average is aux / t
        b = detail::scalar(
            "running-average-vol", constant_fn(beta),
            [=](double t, double x, std::span<const double> aux) {
                const double avg = t > 0.0 ? aux[0] / t : x;
                return c0 + c1 * std::abs(avg);
            },
            x0);
        b.model.aux_dim = 1;
        b.model.aux_init = [](std::span<const double>, std::span<double> aux) { aux[0] = 0.0; };
        b.model.step_hook = [](const StepContext& c, std::span<double> aux) {
            aux[0] += 0.5 * (c.state_before[0] + c.state_after[0]) * c.dt;
        };
        b.model.drift_bound = std::abs(beta);
    } else if (mc.name == "ou2-sum") {
        b = detail::build_ou2_sum(p, x0);
    } else if (mc.name == "time-changed-levy") {
        b = detail::build_time_changed(p, x0);
    } else if (mc.name == "compound-poisson") {
        p.only({"beta", "sigma", "jumps"});
        const double beta = p.number("beta", 0.0), sigma = p.number("sigma", 0.0);
        if (!(sigma >= 0.0)) p.at("sigma").fail("must be >= 0");
        auto levy = parse_levy(p.at("jumps"));
        b = detail::scalar("compound-poisson", constant_fn(beta), constant_fn(sigma), x0);
        b.model.jumps = PoissonDriven{std::move(levy), {}, {}};
        b.model.drift_bound = std::abs(beta);
        b.model.diffusion_bound = sigma;
    } else {
        std::string list;
        for (const auto& n : model_names()) list += (list.empty() ? "" : ", ") + n;
        throw ConfigError("config: model.name: unknown model \"" + mc.name + "\" (known: " + list + ")");
    }
    try {
        b.model.validate();
    } catch (const ConfigError& e) {
        p.fail(e.what());
    }
    return b;
}

} // namespace mproj::cli
