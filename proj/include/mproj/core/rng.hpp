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
#include <numbers>
#include <string_view>

namespace mproj {

/// SplitMix64 output function (Steele, Lea & Flood; Vigna's constants).
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// Split function: the starting counter of stream `stream_id` under `seed`.
///
///     key(seed, id) = mix64(seed ^ mix64(id * golden + golden))
///
/// Streams are addressed only by (seed, id), so output never depends on the
/// order in which streams are consumed or on how work is scheduled.
constexpr std::uint64_t split_key(std::uint64_t seed, std::uint64_t stream_id)
{
    return mix64(seed ^ mix64(stream_id * kGolden + kGolden));
}

/// Derive a sub-seed from a master seed and a stage label (FNV-1a of the label).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return mix64(master ^ mix64(h));
}

/// Counter-based stream: the k-th output is mix64(key + (k+1) * golden).
/// Normal variates use Box-Muller with both halves consumed in order.
class StreamRng {
public:
    explicit StreamRng(std::uint64_t key = 0) : counter_(key) {}

    static StreamRng for_stream(std::uint64_t seed, std::uint64_t stream_id)
    {
        return StreamRng(split_key(seed, stream_id));
    }

    std::uint64_t next_u64()
    {
        counter_ += kGolden;
        return mix64(counter_);
    }

    /// Uniform on the open interval (0, 1).
    double uniform()
    {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Poisson variate by multiplication of uniforms; large means are split
    /// into chunks of at most 16 so exp(-mean) never underflows.
    std::uint64_t poisson(double mean)
    {
        std::uint64_t total = 0;
        while (mean > 16.0) {
            total += poisson_small(16.0);
            mean -= 16.0;
        }
        return total + poisson_small(mean);
    }

private:
    std::uint64_t poisson_small(double mean)
    {
        if (!(mean > 0.0)) return 0;
        const double limit = std::exp(-mean);
        double prod = uniform();
        std::uint64_t k = 0;
        while (prod > limit) {
            prod *= uniform();
            ++k;
        }
        return k;
    }

    std::uint64_t counter_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace mproj
