#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pfp/layers.hpp"
#include "pfp/model.hpp"

namespace pfp::testing {

inline Buffer<double> buf(std::initializer_list<double> v) {
  Buffer<double> b(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) b[i++] = x;
  return b;
}

inline GaussianWeights weights(WeightShape shape, Eigen::ArrayXd mean, Eigen::ArrayXd var,
                               BiasConfig bias = NoBias{}) {
  return GaussianWeights{shape, std::move(mean), std::move(var), SpreadKind::Variance,
                         std::move(bias)};
}

inline GaussianWeights dense_weights(std::size_t out, std::size_t in, std::initializer_list<double> mean,
                                     std::initializer_list<double> var, BiasConfig bias = NoBias{}) {
  return weights(WeightShape{out, in}, buf(mean), buf(var), std::move(bias));
}

// Random Gaussian parameters: means in [-scale, scale], variances in
// [0, var_scale]; probabilistic bias.
class Synth {
 public:
  explicit Synth(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::size_t index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }

  Eigen::ArrayXd array(std::size_t n, double lo, double hi) {
    Eigen::ArrayXd a(static_cast<Eigen::Index>(n));
    for (auto& x : a) x = uniform(lo, hi);
    return a;
  }

  GaussianWeights layer(WeightShape shape, double scale, double var_scale, bool zero_var = false) {
    const std::size_t n = shape.count();
    Eigen::ArrayXd var = zero_var ? Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(n))
                                  : array(n, 0.0, var_scale);
    ProbabilisticBias bias{array(shape.out, -0.1, 0.1),
                           zero_var ? Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(shape.out))
                                    : array(shape.out, 0.0, var_scale)};
    return weights(shape, array(n, -scale, scale), std::move(var), std::move(bias));
  }

  InputTensor input(Shape shape, double lo = -1.0, double hi = 1.0) {
    const auto n = element_count(shape);
    return InputTensor(std::move(shape), array(n, lo, hi));
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline double glorot(std::size_t fan_in) { return std::sqrt(3.0 / static_cast<double>(fan_in)); }

// in -> hidden -> relu -> out.
inline ModelGraph mlp(Synth& g, std::size_t in, std::size_t hidden, std::size_t out,
                      bool zero_var = false, double var_scale = 0.02) {
  ModelGraph m;
  m.name = "mlp";
  m.input_shape = {in};
  m.layers.push_back(DenseLayer{g.layer({hidden, in}, glorot(in), var_scale, zero_var)});
  m.layers.push_back(ReluLayer{});
  m.layers.push_back(DenseLayer{g.layer({out, hidden}, glorot(hidden), var_scale, zero_var)});
  return m;
}

// conv(1->6, 5x5) relu pool conv(6->16, 5x5) relu pool flatten
// dense(256->120) relu dense(120->84) relu dense(84->10) on 28x28 input.
inline ModelGraph lenet(Synth& g, bool zero_var = false, double var_scale = 0.01) {
  ModelGraph m;
  m.name = "lenet";
  m.input_shape = {1, 28, 28};
  m.layers.push_back(Conv2dLayer{g.layer({6, 1, 5, 5}, glorot(25), var_scale, zero_var), 1});
  m.layers.push_back(ReluLayer{});
  m.layers.push_back(MaxPool2x2Layer{});
  m.layers.push_back(Conv2dLayer{g.layer({16, 6, 5, 5}, glorot(150), var_scale, zero_var), 1});
  m.layers.push_back(ReluLayer{});
  m.layers.push_back(MaxPool2x2Layer{});
  m.layers.push_back(FlattenLayer{});
  m.layers.push_back(DenseLayer{g.layer({120, 256}, glorot(256), var_scale, zero_var)});
  m.layers.push_back(ReluLayer{});
  m.layers.push_back(DenseLayer{g.layer({84, 120}, glorot(120), var_scale, zero_var)});
  m.layers.push_back(ReluLayer{});
  m.layers.push_back(DenseLayer{g.layer({10, 84}, glorot(84), var_scale, zero_var)});
  return m;
}

// Small conv net: conv(1->3, 3x3) relu pool flatten dense(->4) on 8x8.
inline ModelGraph small_cnn(Synth& g, bool zero_var = false, double var_scale = 0.02) {
  ModelGraph m;
  m.name = "small-cnn";
  m.input_shape = {1, 8, 8};
  m.layers.push_back(Conv2dLayer{g.layer({3, 1, 3, 3}, glorot(9), var_scale, zero_var), 1});
  m.layers.push_back(ReluLayer{});
  m.layers.push_back(MaxPool2x2Layer{});
  m.layers.push_back(FlattenLayer{});
  m.layers.push_back(DenseLayer{g.layer({4, 27}, glorot(27), var_scale, zero_var)});
  return m;
}

// One or two dense layers without nonlinearity (convert between them).
inline ModelGraph linear_model(Synth& g, std::size_t in, std::size_t hidden, std::size_t out,
                               bool two_layers) {
  ModelGraph m;
  m.name = "linear";
  m.input_shape = {in};
  if (two_layers) {
    m.layers.push_back(DenseLayer{g.layer({hidden, in}, glorot(in), 0.05)});
    m.layers.push_back(ConvertLayer{SpreadKind::SecondRawMoment});
    m.layers.push_back(DenseLayer{g.layer({out, hidden}, glorot(hidden), 0.05)});
  } else {
    m.layers.push_back(DenseLayer{g.layer({out, in}, glorot(in), 0.05)});
  }
  return m;
}

}  // namespace pfp::testing
