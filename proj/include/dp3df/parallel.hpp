// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace dp3df {

/// Number of hardware threads, at least 1.
int hardware_threads();

/// Splits [0, count) into `threads` contiguous chunks and runs
/// `body(begin, end, chunk_index)` on each, one std::thread per chunk.
/// Chunk boundaries depend only on (count, threads), so callers that
/// merge per-chunk partials in chunk order get a fixed reduction order.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t, std::size_t, int)>& body);

}  // namespace dp3df
