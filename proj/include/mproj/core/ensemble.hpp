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
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mproj/core/error.hpp"
#include "mproj/core/grid.hpp"

namespace mproj {

/// Simulated paths. Only the steps listed in `recorded_steps` are stored;
/// index r in the arrays below refers to time grid.time(recorded_steps[r]).
///
/// Characteristics recorded at step k are the oracle values at the left
/// limit xi_{t_k-}, i.e. the ones that drove the step from t_k to t_{k+1}.
/// Jump marks store the realised state jump (after any amplitude map) and
/// the index k of the step in which it occurred.
struct PathEnsemble {
    TimeGrid grid;
    std::uint64_t seed = 0;
    std::size_t dim = 1;
    std::size_t n_paths = 0;
    std::size_t aux_dim = 0;
    std::vector<std::size_t> recorded_steps;

    std::vector<double> values;        // [p][r][dim]
    std::vector<double> drift;         // [p][r][dim], empty when not recorded
    std::vector<double> diffusion_sq;  // [p][r][dim*dim], empty when not recorded
    std::vector<double> aux;           // [p][r][aux_dim], empty when not recorded

    std::vector<std::size_t> jump_offsets;  // n_paths + 1 entries into jump_steps
    std::vector<std::uint32_t> jump_steps;
    std::vector<double> jump_sizes;  // [jump][dim]

    /// Compensator density on `compensator_grid` (CompensatorDirect models), [p][r][ny].
    UniformGrid compensator_grid;
    std::vector<double> compensator;

    std::size_t n_recorded() const { return recorded_steps.size(); }
    bool has_characteristics() const { return !drift.empty(); }
    bool has_aux() const { return !aux.empty(); }
    bool has_compensator() const { return !compensator.empty(); }

    double time(std::size_t r) const { return grid.time(recorded_steps[r]); }

    /// Recorded index of grid step k, or n_recorded() if k was not stored.
    std::size_t record_index(std::size_t k) const
    {
        for (std::size_t r = 0; r < recorded_steps.size(); ++r)
            if (recorded_steps[r] == k) return r;
        return recorded_steps.size();
    }

    /// Recorded index whose time is closest to t.
    std::size_t nearest_record(double t) const
    {
        std::size_t best = 0;
        for (std::size_t r = 1; r < recorded_steps.size(); ++r)
            if (std::abs(time(r) - t) < std::abs(time(best) - t)) best = r;
        return best;
    }

    std::span<const double> state(std::size_t p, std::size_t r) const
    {
        return {values.data() + (p * n_recorded() + r) * dim, dim};
    }

    /// Coordinate `c` of all paths at recorded index r.
    std::vector<double> marginal(std::size_t r, std::size_t c = 0) const
    {
        std::vector<double> out(n_paths);
        for (std::size_t p = 0; p < n_paths; ++p) out[p] = values[(p * n_recorded() + r) * dim + c];
        return out;
    }

    std::size_t jump_count(std::size_t p) const { return jump_offsets[p + 1] - jump_offsets[p]; }

    void validate() const
    {
        const std::size_t nr = n_recorded();
        detail::require(dim >= 1 && nr >= 1, "ensemble: empty");
        for (std::size_t r = 0; r < nr; ++r) {
            detail::require(recorded_steps[r] <= grid.n_steps(), "ensemble: recorded step out of range");
            detail::require(r == 0 || recorded_steps[r] > recorded_steps[r - 1], "ensemble: recorded steps not increasing");
        }
        detail::require(values.size() == n_paths * nr * dim, "ensemble: values shape mismatch");
        detail::require(drift.empty() || drift.size() == values.size(), "ensemble: drift shape mismatch");
        detail::require(diffusion_sq.empty() || diffusion_sq.size() == n_paths * nr * dim * dim,
                        "ensemble: diffusion shape mismatch");
        detail::require(aux.empty() || aux.size() == n_paths * nr * aux_dim, "ensemble: aux shape mismatch");
        detail::require(jump_offsets.size() == n_paths + 1, "ensemble: jump offsets shape mismatch");
        detail::require(jump_offsets.back() == jump_steps.size(), "ensemble: jump offsets inconsistent");
        detail::require(jump_sizes.size() == jump_steps.size() * dim, "ensemble: jump sizes shape mismatch");
        for (auto s : jump_steps) detail::require(s < grid.n_steps(), "ensemble: jump mark references invalid step");
        detail::require(compensator.empty() || compensator.size() == n_paths * nr * compensator_grid.size(),
                        "ensemble: compensator shape mismatch");
    }

    bool operator==(const PathEnsemble&) const = default;
};

namespace detail {

inline constexpr char kEnsembleMagic[8] = {'M', 'P', 'R', 'J', 'E', 'N', 'S', '\0'};
inline constexpr std::uint32_t kEnsembleVersion = 1;

enum EnsembleFlags : std::uint32_t {
    kHasDrift = 1u << 0,
    kHasDiffusion = 1u << 1,
    kHasAux = 1u << 2,
    kHasCompensator = 1u << 3,
};

template <class T>
void put(std::ostream& os, const T& v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void put_array(std::ostream& os, const std::vector<T>& v)
{
    if (!v.empty()) os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
T get(std::istream& is)
{
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ConfigError("ensemble dump: truncated file");
    return v;
}

template <class T>
void get_array(std::istream& is, std::vector<T>& v, std::size_t n)
{
    v.resize(n);
    if (n) is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is) throw ConfigError("ensemble dump: truncated file");
}

} // namespace detail

/// Binary dump, native little-endian layout:
///
///   header   magic "MPRJENS\0", u32 version, u32 d, u64 n_paths, u64 n_steps,
///            f64 t_start, f64 t_end, u64 seed, u64 n_recorded,
///            u64 recorded_steps[n_recorded], u32 flags, u32 aux_dim,
///            [f64 y_lo, f64 y_step, u64 ny]            if flags & compensator
///   values   f64 [path][record][d]
///   optional f64 drift [path][record][d], f64 diffusion_sq [path][record][d*d],
///            f64 aux [path][record][aux_dim], f64 compensator [path][record][ny]
///   jumps    per path: u64 count, then count x (u32 step, f64 size[d])
inline void write_ensemble(const PathEnsemble& e, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("ensemble dump: cannot open " + path);
    os.write(detail::kEnsembleMagic, 8);
    detail::put(os, detail::kEnsembleVersion);
    detail::put(os, static_cast<std::uint32_t>(e.dim));
    detail::put(os, static_cast<std::uint64_t>(e.n_paths));
    detail::put(os, static_cast<std::uint64_t>(e.grid.n_steps()));
    detail::put(os, e.grid.t_start());
    detail::put(os, e.grid.t_end());
    detail::put(os, e.seed);
    detail::put(os, static_cast<std::uint64_t>(e.n_recorded()));
    for (auto k : e.recorded_steps) detail::put(os, static_cast<std::uint64_t>(k));
    std::uint32_t flags = 0;
    if (!e.drift.empty()) flags |= detail::kHasDrift;
    if (!e.diffusion_sq.empty()) flags |= detail::kHasDiffusion;
    if (!e.aux.empty()) flags |= detail::kHasAux;
    if (!e.compensator.empty()) flags |= detail::kHasCompensator;
    detail::put(os, flags);
    detail::put(os, static_cast<std::uint32_t>(e.aux_dim));
    if (flags & detail::kHasCompensator) {
        detail::put(os, e.compensator_grid.lo());
        detail::put(os, e.compensator_grid.step());
        detail::put(os, static_cast<std::uint64_t>(e.compensator_grid.size()));
    }
    detail::put_array(os, e.values);
    detail::put_array(os, e.drift);
    detail::put_array(os, e.diffusion_sq);
    detail::put_array(os, e.aux);
    detail::put_array(os, e.compensator);
    for (std::size_t p = 0; p < e.n_paths; ++p) {
        detail::put(os, static_cast<std::uint64_t>(e.jump_count(p)));
        for (std::size_t j = e.jump_offsets[p]; j < e.jump_offsets[p + 1]; ++j) {
            detail::put(os, e.jump_steps[j]);
            os.write(reinterpret_cast<const char*>(e.jump_sizes.data() + j * e.dim),
                     static_cast<std::streamsize>(e.dim * sizeof(double)));
        }
    }
    if (!os) throw NumericError("ensemble dump: write failed for " + path);
}

inline PathEnsemble read_ensemble(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("ensemble dump: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kEnsembleMagic, 8) != 0) throw ConfigError("ensemble dump: bad magic");
    if (detail::get<std::uint32_t>(is) != detail::kEnsembleVersion)
        throw ConfigError("ensemble dump: unsupported version");
    PathEnsemble e;
    e.dim = detail::get<std::uint32_t>(is);
    e.n_paths = detail::get<std::uint64_t>(is);
    const auto n_steps = detail::get<std::uint64_t>(is);
    const auto t0 = detail::get<double>(is);
    const auto t1 = detail::get<double>(is);
    e.grid = TimeGrid(t0, t1, n_steps);
    e.seed = detail::get<std::uint64_t>(is);
    const auto nr = detail::get<std::uint64_t>(is);
    for (std::uint64_t r = 0; r < nr; ++r) e.recorded_steps.push_back(detail::get<std::uint64_t>(is));
    const auto flags = detail::get<std::uint32_t>(is);
    e.aux_dim = detail::get<std::uint32_t>(is);
    std::size_t ny = 0;
    if (flags & detail::kHasCompensator) {
        const auto lo = detail::get<double>(is);
        const auto step = detail::get<double>(is);
        ny = detail::get<std::uint64_t>(is);
        e.compensator_grid = UniformGrid(lo, step, ny);
    }
    const std::size_t cells = e.n_paths * nr;
    detail::get_array(is, e.values, cells * e.dim);
    if (flags & detail::kHasDrift) detail::get_array(is, e.drift, cells * e.dim);
    if (flags & detail::kHasDiffusion) detail::get_array(is, e.diffusion_sq, cells * e.dim * e.dim);
    if (flags & detail::kHasAux) detail::get_array(is, e.aux, cells * e.aux_dim);
    if (flags & detail::kHasCompensator) detail::get_array(is, e.compensator, cells * ny);
    e.jump_offsets.assign(1, 0);
    for (std::size_t p = 0; p < e.n_paths; ++p) {
        const auto count = detail::get<std::uint64_t>(is);
        for (std::uint64_t j = 0; j < count; ++j) {
            e.jump_steps.push_back(detail::get<std::uint32_t>(is));
            for (std::size_t c = 0; c < e.dim; ++c) e.jump_sizes.push_back(detail::get<double>(is));
        }
        e.jump_offsets.push_back(e.jump_steps.size());
    }
    e.validate();
    return e;
}

} // namespace mproj
