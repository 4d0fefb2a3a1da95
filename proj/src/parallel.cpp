// SPDX-License-Identifier: Apache-2.0
#include "dp3df/parallel.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace dp3df {

int hardware_threads() {
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t, std::size_t, int)>& body) {
  if (count == 0) return;
  const std::size_t chunks = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, count);
  if (chunks == 1) {
    body(0, count, 0);
    return;
  }
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = count * c / chunks;
    const std::size_t end = count * (c + 1) / chunks;
    pool.emplace_back([&, begin, end, c] {
      try {
        body(begin, end, static_cast<int>(c));
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace dp3df
