#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "pfp/gaussian_tensor.hpp"
#include "pfp/model.hpp"
#include "pfp/reference.hpp"

// Sampling reference: draw weight realizations theta = mu + sigma * eps,
// run point forward passes, and reduce the sampled logits.
//
// Seeding rule: sample s draws from NormalStream(seed, s). Parameters are
// consumed in a fixed order: layers in chain order; within a layer all
// weights in row-major order, then the bias (only when probabilistic). A
// draw is consumed even for sigma = 0, so parameter k of sample s always
// sees the same eps regardless of the model's variances or worker count.

namespace pfp {

/// Sampled logits laid out (sample, item, class).
struct SampleSet {
  std::size_t n_samples = 0;
  std::size_t batch = 0;
  std::size_t classes = 0;
  std::uint64_t seed = 0;
  Buffer<double> logits;

  double at(std::size_t s, std::size_t item, std::size_t cls) const {
    return logits[(s * batch + item) * classes + cls];
  }
};

PointNetwork sample_network(const ModelGraph& model, std::size_t sample_index, std::uint64_t seed);

SampleSet mc_predict(const ModelGraph& model, const InputTensor& input, std::size_t n,
                     std::uint64_t seed, unsigned threads = 1);

/// Per-logit sample statistics. var is the unbiased (n - 1) estimator;
/// fourth is the biased fourth central moment, used for the standard
/// error of var.
struct EmpiricalMoments {
  std::size_t n = 0;
  std::size_t batch = 0;
  std::size_t classes = 0;
  Buffer<double> mean;
  Buffer<double> var;
  Buffer<double> fourth;

  double mean_standard_error(std::size_t k) const;
  double var_standard_error(std::size_t k) const;
};

EmpiricalMoments empirical_moments(const SampleSet& s);

/// Monte-Carlo estimate of E[f(x)] and E[f(x)^2] for x ~ N(mean, var).
/// Transforms: "relu", "identity", and "max-pair", which is
/// max(x, y) with independent y ~ N(pair_mean, pair_var).
struct ScalarMoments {
  double mean = 0.0;
  double srm = 0.0;
  double mean_se = 0.0;
  double srm_se = 0.0;
};

ScalarMoments scalar_mc_moments(const std::string& transform, double mean, double var,
                                std::size_t n, std::uint64_t seed, double pair_mean = 0.0,
                                double pair_var = 1.0);

}  // namespace pfp
