#ifndef VF_PARALLEL_HPP
#define VF_PARALLEL_HPP

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace vf {

// Global worker count for parallel_for. Results must be identical for any
// value, so workers only ever get disjoint output ranges.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). With T workers the index range is split into T
// contiguous chunks; every element is computed by exactly one worker with the
// same per-element arithmetic as the sequential loop, so the output is
// bitwise independent of T.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  const int threads = num_threads();
  if (threads <= 1 || n < 2) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::int64_t t = std::min<std::int64_t>(threads, n);
  const std::int64_t chunk = (n + t - 1) / t;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(t));
  for (std::int64_t w = 0; w < t; ++w) {
    const std::int64_t lo = w * chunk;
    const std::int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace vf

#endif  // VF_PARALLEL_HPP
