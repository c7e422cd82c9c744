#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "pfp/gaussian_tensor.hpp"

namespace pfp {

struct NoBias {};

struct DeterministicBias {
  Eigen::ArrayXd values;
};

struct ProbabilisticBias {
  Eigen::ArrayXd mean;
  Eigen::ArrayXd variance;
};

using BiasConfig = std::variant<NoBias, DeterministicBias, ProbabilisticBias>;

double bias_mean(const BiasConfig& bias, std::size_t i);
double bias_variance(const BiasConfig& bias, std::size_t i);
const char* bias_kind_name(const BiasConfig& bias);

// Weight tensor geometry. Dense layers use kernel 1x1 with in = in_features.
struct WeightShape {
  std::size_t out = 0;
  std::size_t in = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;

  std::size_t fan_in() const { return in * kernel_h * kernel_w; }
  std::size_t count() const { return out * fan_in(); }
};

/// Gaussian parameters of one compute layer. Weights are row-major
/// (out, in) for dense and (out, in, kernel_h, kernel_w) for conv.
struct GaussianWeights {
  WeightShape shape;
  Eigen::ArrayXd mean;
  Eigen::ArrayXd spread;
  SpreadKind kind = SpreadKind::Variance;
  BiasConfig bias = NoBias{};

  // Elementwise variance or second raw moment irrespective of kind().
  double variance(std::size_t i) const {
    return kind == SpreadKind::Variance ? spread[i] : spread[i] - mean[i] * mean[i];
  }
  double second_raw_moment(std::size_t i) const {
    return kind == SpreadKind::SecondRawMoment ? spread[i] : spread[i] + mean[i] * mean[i];
  }
};

// Checks buffer lengths and spread invariants; throws ShapeError,
// NegativeVariance or CorruptMoments.
void check_weights(const GaussianWeights& w);

// Same parameters re-expressed in the requested spread kind.
GaussianWeights with_spread_kind(const GaussianWeights& w, SpreadKind kind);

struct DenseLayer {
  GaussianWeights weights;
};

struct Conv2dLayer {
  GaussianWeights weights;
  std::size_t stride = 1;
};

struct ReluLayer {};
struct MaxPool2x2Layer {};
struct FlattenLayer {};

// Explicit representation change placed by the model author.
struct ConvertLayer {
  SpreadKind to = SpreadKind::SecondRawMoment;
};

using LayerSpec = std::variant<DenseLayer, Conv2dLayer, ReluLayer, MaxPool2x2Layer,
                               FlattenLayer, ConvertLayer>;

std::string layer_name(const LayerSpec& layer);

// Compute layers are the only ones carrying parameters.
const GaussianWeights* layer_weights(const LayerSpec& layer);
GaussianWeights* layer_weights(LayerSpec& layer);

}  // namespace pfp
