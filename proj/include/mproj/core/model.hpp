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
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mproj/core/error.hpp"
#include "mproj/core/grid.hpp"
#include "mproj/core/levy.hpp"
#include "mproj/core/rng.hpp"

namespace mproj {

/// What an oracle sees of a path: the current left-limit state and the
/// auxiliary accumulators maintained by the model's step hook.
struct History {
    std::span<const double> state;
    std::span<const double> aux;

    double x() const { return state[0]; }
};

/// beta(t, history) -> R^d, written to `out`.
using DriftFn = std::function<void(double t, const History& h, std::span<double> out)>;
/// delta(t, history) -> d x n matrix, row-major, written to `out`.
using DiffusionFn = std::function<void(double t, const History& h, std::span<double> out)>;
/// psi(t, history, y) -> R^d, written to `out`.
using AmplitudeFn = std::function<void(double t, const History& h, std::span<const double> y, std::span<double> out)>;
/// Positive multiplier of the Poisson intensity, e.g. a time-change rate.
using RateFn = std::function<double(double t, const History& h)>;

/// Jumps driven by a Poisson random measure with Levy measure nu and
/// (optionally) a predictable amplitude psi; without psi the jump of the
/// state is y itself.
struct PoissonDriven {
    LevyDensitySpec levy;
    AmplitudeFn amplitude;
    RateFn rate_scale;
};

/// Jumps given directly by a compensator density m(t, history, y) (d = 1),
/// resolved on a uniform y-grid of cell centres.
struct CompensatorDirect {
    std::function<double(double t, const History& h, double y)> density;
    UniformGrid y_grid;
};

struct NoJumps {};

using JumpSpec = std::variant<NoJumps, PoissonDriven, CompensatorDirect>;

/// Initial law mu_0: a point mass, or a sampler when `sampler` is set.
struct InitialLaw {
    std::vector<double> point{0.0};
    std::function<void(StreamRng& rng, std::span<double> out)> sampler;

    bool is_point_mass() const { return !sampler; }
};

/// Everything a step hook may look at when updating auxiliary accumulators.
struct StepContext {
    double t = 0.0;   // left end of the step
    double dt = 0.0;
    std::span<const double> state_before;
    std::span<const double> state_after;
    std::span<const double> gaussian;  // the n standard normals that drove the step
    StreamRng* rng = nullptr;          // path stream, for accumulators with their own noise
};

/// Ito semimartingale
///
///     dxi = beta dt + delta dW + int_{|y|<=1} y (M - mu)(dt dy) + int_{|y|>1} y M(dt dy)
///
/// described through oracles evaluated along the path history.
struct ItoModel {
    std::string name = "model";
    std::size_t dim = 1;
    std::size_t noise_dim = 1;
    std::size_t aux_dim = 0;

    InitialLaw initial;
    DriftFn drift;
    DiffusionFn diffusion;
    JumpSpec jumps = NoJumps{};

    std::function<void(std::span<const double> x0, std::span<double> aux)> aux_init;
    std::function<void(const StepContext& ctx, std::span<double> aux)> step_hook;

    /// Declared bounds used by the assumption audit.
    double drift_bound = std::numeric_limits<double>::infinity();
    double diffusion_bound = std::numeric_limits<double>::infinity();

    bool has_jumps() const { return !std::holds_alternative<NoJumps>(jumps); }

    void validate() const
    {
        detail::require(dim >= 1, "model: dimension must be >= 1");
        detail::require(noise_dim >= 1, "model: noise dimension must be >= 1");
        detail::require(static_cast<bool>(drift), "model: missing drift oracle");
        detail::require(static_cast<bool>(diffusion), "model: missing diffusion oracle");
        if (initial.is_point_mass())
            detail::require(initial.point.size() == dim, "model: initial point has wrong dimension");
        detail::require(aux_dim == 0 || static_cast<bool>(aux_init), "model: aux accumulators need aux_init");
        detail::require(!std::isnan(drift_bound) && !std::isnan(diffusion_bound), "model: NaN declared bound");
        if (const auto* pd = std::get_if<PoissonDriven>(&jumps)) {
            pd->levy.validate();
            detail::require(pd->amplitude || pd->levy.dimension() == dim,
                            "model: jump dimension differs from state dimension");
        } else if (const auto* cd = std::get_if<CompensatorDirect>(&jumps)) {
            detail::require(dim == 1, "model: compensator-direct jumps support d = 1 only");
            detail::require(static_cast<bool>(cd->density), "model: missing compensator density");
            detail::require(cd->y_grid.size() >= 2, "model: compensator y-grid too small");
        }
    }
};

/// Scalar model from plain functions of (t, x, aux).
inline ItoModel scalar_model(std::string name, std::function<double(double, double, std::span<const double>)> beta,
                             std::function<double(double, double, std::span<const double>)> delta, double x0 = 0.0)
{
    ItoModel m;
    m.name = std::move(name);
    m.initial.point = {x0};
    m.drift = [beta = std::move(beta)](double t, const History& h, std::span<double> out) {
        out[0] = beta(t, h.x(), h.aux);
    };
    m.diffusion = [delta = std::move(delta)](double t, const History& h, std::span<double> out) {
        out[0] = delta(t, h.x(), h.aux);
    };
    return m;
}

/// Time-changed Levy process: L_{Theta_t} with Theta_t = int_0^t theta_s ds,
/// L having triplet (b, sigma^2, nu). The rate theta is read from the path
/// history by `rate`.
struct TimeChangeSpec {
    double b = 0.0;
    double sigma = 1.0;
    std::optional<LevyDensitySpec> levy;
    RateFn rate;

    void validate() const
    {
        detail::require(static_cast<bool>(rate), "time change: missing rate oracle");
        detail::require(std::isfinite(b) && sigma >= 0.0, "time change: invalid base triplet");
        if (levy) levy->validate();
    }
};

} // namespace mproj
