#include "pfp/mc_oracle.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pfp/parallel.hpp"
#include "pfp/random.hpp"

namespace pfp {

namespace {

template <class Dst>
void draw_weights(const GaussianWeights& w, NormalStream& normal, Dst& dst) {
  double* out = dst.data();
  for (std::size_t k = 0; k < w.shape.count(); ++k) {
    const double eps = normal();
    out[k] = w.mean[k] + std::sqrt(std::max(w.variance(k), 0.0)) * eps;
  }
}

Eigen::VectorXd draw_bias(const GaussianWeights& w, NormalStream& normal) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(w.shape.out));
  if (const auto* d = std::get_if<DeterministicBias>(&w.bias)) {
    b = d->values.matrix();
  } else if (const auto* p = std::get_if<ProbabilisticBias>(&w.bias)) {
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      const double eps = normal();
      b[i] = p->mean[i] + std::sqrt(p->variance[i]) * eps;
    }
  }
  return b;
}

}  // namespace

PointNetwork sample_network(const ModelGraph& model, std::size_t sample_index, std::uint64_t seed) {
  PointNetwork net = mean_network(model);
  NormalStream normal(seed, sample_index);
  std::size_t point = 0;
  for (const auto& layer : model.layers) {
    // Point layers mirror the model minus convert layers.
    if (std::holds_alternative<ConvertLayer>(layer)) continue;
    const auto* w = layer_weights(layer);
    if (w) {
      std::visit(
          [&](auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, PointDense> || std::is_same_v<T, PointConv>) {
              draw_weights(*w, normal, p.weight);
              p.bias = draw_bias(*w, normal);
            }
          },
          net.layers[point]);
    }
    ++point;
  }
  return net;
}

SampleSet mc_predict(const ModelGraph& model, const InputTensor& input, std::size_t n,
                     std::uint64_t seed, unsigned threads) {
  if (n < 1) throw InvalidArgument("mc_predict: need at least one sample");
  const auto plan = plan_model(model);
  SampleSet out;
  out.n_samples = n;
  out.batch = input.batch();
  out.classes = plan.classes;
  out.seed = seed;
  const std::size_t block = out.batch * out.classes;
  out.logits.resize(static_cast<Eigen::Index>(n * block));
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      const auto logits = point_forward(sample_network(model, s, seed), input);
      out.logits.segment(static_cast<Eigen::Index>(s * block), static_cast<Eigen::Index>(block)) =
          logits.values();
    }
  });
  return out;
}

double EmpiricalMoments::mean_standard_error(std::size_t k) const {
  return std::sqrt(var[static_cast<Eigen::Index>(k)] / static_cast<double>(n));
}

double EmpiricalMoments::var_standard_error(std::size_t k) const {
  // Var(s^2) ~ (m4 - sigma^4) / n for large n.
  const auto i = static_cast<Eigen::Index>(k);
  const double v = var[i];
  return std::sqrt(std::max(fourth[i] - v * v, 0.0) / static_cast<double>(n));
}

EmpiricalMoments empirical_moments(const SampleSet& s) {
  if (s.n_samples < 2) {
    throw InsufficientSamples(
        fmt::format("empirical_moments: need at least 2 samples, got {}", s.n_samples));
  }
  EmpiricalMoments m;
  m.n = s.n_samples;
  m.batch = s.batch;
  m.classes = s.classes;
  const auto block = static_cast<Eigen::Index>(s.batch * s.classes);
  m.mean = Buffer<double>::Zero(block);
  m.var = Buffer<double>::Zero(block);
  m.fourth = Buffer<double>::Zero(block);
  const double n = static_cast<double>(s.n_samples);
  for (std::size_t k = 0; k < s.n_samples; ++k) {
    m.mean += s.logits.segment(static_cast<Eigen::Index>(k) * block, block);
  }
  m.mean /= n;
  for (std::size_t k = 0; k < s.n_samples; ++k) {
    const Buffer<double> d = s.logits.segment(static_cast<Eigen::Index>(k) * block, block) - m.mean;
    const Buffer<double> d2 = d.square();
    m.var += d2;
    m.fourth += d2.square();
  }
  m.var /= (n - 1.0);
  m.fourth /= n;
  return m;
}

ScalarMoments scalar_mc_moments(const std::string& transform, double mean, double var,
                                std::size_t n, std::uint64_t seed, double pair_mean,
                                double pair_var) {
  enum class Kind { Relu, Identity, MaxPair };
  Kind kind;
  if (transform == "relu") {
    kind = Kind::Relu;
  } else if (transform == "identity") {
    kind = Kind::Identity;
  } else if (transform == "max-pair") {
    kind = Kind::MaxPair;
  } else {
    throw InvalidArgument("scalar_mc_moments: unknown transform '" + transform + "'");
  }
  if (n < 2) throw InsufficientSamples("scalar_mc_moments: need at least 2 samples");
  if (var < 0.0 || pair_var < 0.0) throw NegativeVariance("scalar_mc_moments: negative variance");

  NormalStream normal(seed, 0);
  const double sigma = std::sqrt(var);
  const double pair_sigma = std::sqrt(pair_var);
  double s1 = 0.0, s2 = 0.0, s4 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = mean + sigma * normal();
    if (kind == Kind::Relu) {
      x = std::max(x, 0.0);
    } else if (kind == Kind::MaxPair) {
      x = std::max(x, pair_mean + pair_sigma * normal());
    }
    const double x2 = x * x;
    s1 += x;
    s2 += x2;
    s4 += x2 * x2;
  }
  const double nn = static_cast<double>(n);
  ScalarMoments r;
  r.mean = s1 / nn;
  r.srm = s2 / nn;
  const double e4 = s4 / nn;
  r.mean_se = std::sqrt(std::max(r.srm - r.mean * r.mean, 0.0) / (nn - 1.0));
  r.srm_se = std::sqrt(std::max(e4 - r.srm * r.srm, 0.0) / (nn - 1.0));
  return r;
}

}  // namespace pfp
