#pragma once

// Static partition of [0, n) over worker threads. Each index is handled exactly once, so
// results written per index are independent of the thread count.

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace evnet::detail {

template <class F>
void parallel_for(int n, int threads, F&& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first;
  int first_index = n;
  std::mutex m;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) {
        try {
          fn(i);
        } catch (...) {
          // Keep the lowest failing index so the reported error does not depend on timing.
          std::lock_guard<std::mutex> lock(m);
          if (i < first_index) {
            first_index = i;
            first = std::current_exception();
          }
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

}  // namespace evnet::detail
