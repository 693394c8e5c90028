#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace xembod {

// Run fn(0..n-1) across up to `workers` threads. Work items must be
// independent; results land in caller-owned per-index slots so the thread
// count never affects outcomes. The first exception is rethrown.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int count = std::max(1, std::min(workers, n));
  if (count == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(count);
  for (int w = 0; w < count; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += count) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace xembod
