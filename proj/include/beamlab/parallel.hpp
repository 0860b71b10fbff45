#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace beamlab {

/// Runs body(i) for i in [0, n) on up to `threads` workers. Indices are
/// handed out dynamically; the first exception of each worker is rethrown
/// after all workers join.
template <class F> void parallel_for(int n, int threads, F&& body) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errs(threads);
  std::vector<std::thread> pool;
  for (int k = 0; k < threads; ++k)
    pool.emplace_back([&, k] {
      try {
        for (int i = next++; i < n; i = next++) body(i);
      } catch (...) {
        errs[k] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

} // namespace beamlab
