#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "dtk/tensor.hpp"

namespace dtk {

/// Worker cap: DTK_THREADS if set and positive, else hardware concurrency.
inline int worker_count() {
  static const int count = [] {
    if (const char* env = std::getenv("DTK_THREADS")) {
      try {
        int n = std::stoi(env);
        if (n > 0) return n;
      } catch (...) {
      }
    }
    return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  }();
  return count;
}

/// Runs fn(i) for i in [0, n). Each index is processed by exactly one worker,
/// so callers writing to disjoint slots stay deterministic.
template <typename Fn>
void parallel_for(Index n, Fn&& fn) {
  const int workers = static_cast<int>(std::min<Index>(worker_count(), n));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (Index i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace dtk
