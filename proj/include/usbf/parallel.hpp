#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace usbf {

namespace detail {
inline std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{0};
  return cap;
}
}  // namespace detail

/// Caps the worker count used by parallel_for. Zero restores the default
/// (hardware concurrency).
inline void set_max_threads(int n) { detail::thread_cap().store(std::max(0, n)); }

inline int max_threads() {
  const int cap = detail::thread_cap().load();
  if (cap > 0) return cap;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [begin, end) over contiguous static chunks.
/// Bodies must write disjoint outputs; results then do not depend on the
/// thread count. The first exception thrown by any worker is rethrown.
template <typename Body>
void parallel_for(int begin, int end, Body&& body) {
  const int count = end - begin;
  if (count <= 0) return;
  const int workers = std::min(max_threads(), count);
  if (workers == 1) {
    for (int i = begin; i < end; ++i) body(i);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int lo = begin + static_cast<int>(static_cast<long long>(count) * w / workers);
    const int hi = begin + static_cast<int>(static_cast<long long>(count) * (w + 1) / workers);
    pool.emplace_back([&, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace usbf
