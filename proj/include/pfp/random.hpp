#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace pfp {

/// Reproducible standard-normal stream.
///
/// Engine: std::mt19937_64, whose output sequence is fixed by the C++
/// standard, seeded through std::seed_seq with the 32-bit halves of
/// (seed, stream). Uniforms take the top 53 bits of each draw. Normals use
/// the Box-Muller transform; each pair of uniforms yields two normals,
/// returned cos-branch first.
///
/// Streams are keyed by (seed, stream) only, so callers that key a stream per
/// Monte-Carlo sample or per item get results independent of how work is
/// split across threads.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  // Uniform in (0, 1].
  double uniform_open_zero() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform_open_zero()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pfp
