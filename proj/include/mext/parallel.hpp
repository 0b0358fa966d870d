#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mext {

namespace detail {
inline std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{0};
  return cap;
}
}  // namespace detail

/// Caps worker threads for all replication loops. 0 means hardware concurrency.
inline void set_max_threads(int n) { detail::thread_cap().store(n < 0 ? 0 : n); }

inline int max_threads() {
  int cap = detail::thread_cap().load();
  int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return cap > 0 ? cap : hw;
}

/*!
 * Runs fn(i) for i in [0, n). Work items must write only to their own output
 * slots; the caller reduces in index order, which keeps results independent of
 * the worker count. The exception from the lowest failing index is rethrown.
 */
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr err;
  std::size_t err_idx = n;
  auto work = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (i < err_idx) {
          err_idx = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace mext
