#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace escox {

/// Runs fn(0..n_items-1) over n_threads worker threads. Work items must
/// write disjoint outputs; completion order then has no effect on results.
/// The first exception thrown by any item is rethrown on the caller.
inline void parallel_for(int n_items, int n_threads,
                         const std::function<void(int)>& fn) {
  if (n_items <= 0) return;
  if (n_threads <= 1 || n_items == 1) {
    for (int i = 0; i < n_items; ++i) fn(i);
    return;
  }
  const int workers = std::min(n_threads, n_items);
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (;;) {
          const int i = next.fetch_add(1);
          if (i >= n_items) break;
          fn(i);
        }
      } catch (...) {
        errors[w] = std::current_exception();
        next.store(n_items);  // stop handing out work
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline int default_thread_count() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace escox
