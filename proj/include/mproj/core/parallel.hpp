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
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mproj {

inline unsigned default_threads()
{
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Run body(begin, end) over contiguous chunks of [0, count). The chunking
/// depends on `threads`, so callers must make each index's result
/// independent of which chunk processed it. The first exception thrown by
/// any chunk is rethrown on the calling thread.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body)
{
    if (count == 0) return;
    threads = std::max(1u, threads);
    const std::size_t n_chunks = std::min<std::size_t>(threads, count);
    if (n_chunks == 1) {
        body(std::size_t{0}, count);
        return;
    }
    std::vector<std::exception_ptr> errors(n_chunks);
    std::vector<std::thread> pool;
    pool.reserve(n_chunks);
    const std::size_t per = (count + n_chunks - 1) / n_chunks;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        const std::size_t begin = c * per;
        const std::size_t end = std::min(count, begin + per);
        pool.emplace_back([&, c, begin, end] {
            try {
                if (begin < end) body(begin, end);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace mproj
