#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pfp/error.hpp"

namespace pfp {

// How the spread buffer of a GaussianTensor is to be read.
enum class SpreadKind { Variance, SecondRawMoment };

const char* to_string(SpreadKind kind);

// Batch-major, row-major dimension list.
using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Absolute slack tolerated when a second raw moment dips below mean^2.
inline constexpr double kRepresentationEpsilon = 1e-9;

// Variances below this are treated as exactly deterministic by the
// nonlinear moment-matching kernels.
inline constexpr double kActivationEpsilon = 1e-12;

template <typename Scalar>
using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Per-element Gaussian marginals: a mean buffer plus a spread buffer that
/// holds either variances or second raw moments E[x^2], as recorded by kind().
///
/// Instances are immutable once built; every operator returns a new tensor.
template <typename Scalar>
class GaussianTensor {
 public:
  using scalar_type = Scalar;

  GaussianTensor() = default;

  GaussianTensor(Shape shape, Buffer<Scalar> mean, Buffer<Scalar> spread,
                 SpreadKind kind)
      : shape_(std::move(shape)),
        mean_(std::move(mean)),
        spread_(std::move(spread)),
        kind_(kind) {
    const auto n = element_count(shape_);
    if (static_cast<std::size_t>(mean_.size()) != n ||
        static_cast<std::size_t>(spread_.size()) != n) {
      throw ShapeError("GaussianTensor: buffers of length " +
                       std::to_string(mean_.size()) + "/" +
                       std::to_string(spread_.size()) + " do not match shape " +
                       shape_string(shape_));
    }
  }

  static GaussianTensor zeros(Shape shape, SpreadKind kind) {
    const auto n = static_cast<Eigen::Index>(element_count(shape));
    return GaussianTensor(std::move(shape), Buffer<Scalar>::Zero(n),
                          Buffer<Scalar>::Zero(n), kind);
  }

  const Shape& shape() const { return shape_; }
  const Buffer<Scalar>& mean() const { return mean_; }
  const Buffer<Scalar>& spread() const { return spread_; }
  SpreadKind kind() const { return kind_; }

  std::size_t size() const { return static_cast<std::size_t>(mean_.size()); }
  std::size_t batch() const { return shape_.empty() ? 1 : shape_.front(); }

  // Same buffers under a new shape with an equal element count.
  GaussianTensor reshaped(Shape shape) const {
    return GaussianTensor(std::move(shape), mean_, spread_, kind_);
  }

 private:
  Shape shape_{0};
  Buffer<Scalar> mean_;
  Buffer<Scalar> spread_;
  SpreadKind kind_ = SpreadKind::Variance;
};

/// Point-valued tensor, used for raw network inputs and sampled logits.
template <typename Scalar>
class DeterministicTensor {
 public:
  using scalar_type = Scalar;

  DeterministicTensor() = default;

  DeterministicTensor(Shape shape, Buffer<Scalar> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.size()) != element_count(shape_)) {
      throw ShapeError("DeterministicTensor: " + std::to_string(values_.size()) +
                       " values do not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  const Buffer<Scalar>& values() const { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  std::size_t batch() const { return shape_.empty() ? 1 : shape_.front(); }

  DeterministicTensor reshaped(Shape shape) const {
    return DeterministicTensor(std::move(shape), values_);
  }

 private:
  Shape shape_{0};
  Buffer<Scalar> values_;
};

using Tensor = GaussianTensor<double>;
using InputTensor = DeterministicTensor<double>;

// First invariant a tensor breaks, with the offending flat index.
struct Violation {
  std::string invariant;
  std::size_t index = 0;

  std::string message() const {
    return invariant + " at element " + std::to_string(index);
  }
};

template <typename Scalar>
std::optional<Violation> validate(const GaussianTensor<Scalar>& t) {
  const auto& mean = t.mean();
  const auto& spread = t.spread();
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (!std::isfinite(mean[i])) return Violation{"non-finite mean", idx};
    if (!std::isfinite(spread[i])) return Violation{"non-finite spread", idx};
    if (t.kind() == SpreadKind::Variance) {
      if (spread[i] < Scalar(0)) return Violation{"negative variance", idx};
    } else if (spread[i] < mean[i] * mean[i] - Scalar(kRepresentationEpsilon)) {
      return Violation{"second raw moment below mean^2", idx};
    }
  }
  return std::nullopt;
}

template <typename Scalar>
std::optional<Violation> validate(const DeterministicTensor<Scalar>& t) {
  const auto& v = t.values();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      return Violation{"non-finite value", static_cast<std::size_t>(i)};
    }
  }
  return std::nullopt;
}

// E[x^2] = mu^2 + sigma^2, elementwise, in either direction.
template <typename Scalar>
GaussianTensor<Scalar> convert_spread(const GaussianTensor<Scalar>& t,
                                      SpreadKind target) {
  if (t.kind() == target) return t;
  const auto& mean = t.mean();
  Buffer<Scalar> spread(mean.size());
  if (target == SpreadKind::SecondRawMoment) {
    spread = t.spread() + mean.square();
  } else {
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
      Scalar v = t.spread()[i] - mean[i] * mean[i];
      if (v < Scalar(0)) {
        if (v < -Scalar(kRepresentationEpsilon)) {
          throw CorruptMoments("convert_spread: second raw moment " +
                               std::to_string(t.spread()[i]) + " below mean^2 " +
                               std::to_string(mean[i] * mean[i]) +
                               " at element " + std::to_string(i));
        }
        v = Scalar(0);
      }
      spread[i] = v;
    }
  }
  return GaussianTensor<Scalar>(t.shape(), mean, std::move(spread), target);
}

}  // namespace pfp
