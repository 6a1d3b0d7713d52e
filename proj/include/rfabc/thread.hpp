#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace rfabc {

namespace detail {
inline std::atomic<int>& max_threads_slot() {
  static std::atomic<int> value{0};  // 0 = use hardware concurrency
  return value;
}
}  // namespace detail

inline void set_max_threads(int n) { detail::max_threads_slot().store(n); }

inline int max_threads() {
  int n = detail::max_threads_slot().load();
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return n > 0 ? n : 1;
}

/// Runs fn(i) for i in [0, n). Work items must be independent; each item may
/// only write to its own output slot. Exceptions are rethrown in the caller.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::atomic<int> error_guard{0};
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        if (error_guard.fetch_add(1) == 0) error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace rfabc
