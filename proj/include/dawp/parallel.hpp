#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace dawp {

/// Static-partition parallel loop. Each index must touch only its own outputs;
/// results are identical for any job count.
template <typename Fn>
void parallel_for(std::int64_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  int workers = static_cast<int>(std::min<std::int64_t>(jobs, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::int64_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace dawp
