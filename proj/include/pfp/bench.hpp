#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <vector>

namespace pfp {

struct LatencyStats {
  double median_ms = 0.0;
  double mean_ms = 0.0;
  std::size_t iterations = 0;
};

// Runs fn `warmup` times untimed, then `iterations` times on a monotonic clock.
template <class Fn>
LatencyStats measure_latency(Fn&& fn, std::size_t warmup, std::size_t iterations) {
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> ms;
  ms.reserve(iterations);
  for (std::size_t i = 0; i < iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  LatencyStats s;
  s.iterations = iterations;
  if (ms.empty()) return s;
  double total = 0.0;
  for (double v : ms) total += v;
  s.mean_ms = total / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  const std::size_t mid = ms.size() / 2;
  s.median_ms = ms.size() % 2 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
  return s;
}

}  // namespace pfp
