#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace rde {

// Runs fn(i) for i in [0, n); results must be written to preallocated
// per-index slots by the caller.  The reduction order is by index, so the
// outcome does not depend on the worker count.
inline void parallel_for(long long n, int workers,
                         const std::function<void(long long)>& fn) {
  if (workers <= 1 || n < 2) {
    for (long long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const long long chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const long long lo = w * chunk;
    const long long hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (long long i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct RunningStat {
  double sum = 0.0;
  double sum_sq = 0.0;
  long long n = 0;

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return n > 0 ? sum / n : 0.0; }
  double variance() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::max(0.0, (sum_sq - n * m * m) / (n - 1));
  }
  double stderr_of_mean() const {
    return n > 0 ? std::sqrt(variance() / n) : 0.0;
  }
};

}  // namespace rde
