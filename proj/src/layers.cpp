#include "pfp/layers.hpp"

#include <cmath>

#include <fmt/format.h>

#include "pfp/error.hpp"

namespace pfp {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

double bias_mean(const BiasConfig& bias, std::size_t i) {
  return std::visit(Overloaded{
                        [](const NoBias&) { return 0.0; },
                        [i](const DeterministicBias& b) { return b.values[i]; },
                        [i](const ProbabilisticBias& b) { return b.mean[i]; },
                    },
                    bias);
}

double bias_variance(const BiasConfig& bias, std::size_t i) {
  if (const auto* p = std::get_if<ProbabilisticBias>(&bias)) return p->variance[i];
  return 0.0;
}

const char* bias_kind_name(const BiasConfig& bias) {
  return std::visit(Overloaded{
                        [](const NoBias&) { return "none"; },
                        [](const DeterministicBias&) { return "deterministic"; },
                        [](const ProbabilisticBias&) { return "probabilistic"; },
                    },
                    bias);
}

void check_weights(const GaussianWeights& w) {
  const auto n = static_cast<Eigen::Index>(w.shape.count());
  if (w.shape.out == 0 || w.shape.fan_in() == 0) {
    throw ShapeError("weights: zero-sized layer");
  }
  if (w.mean.size() != n || w.spread.size() != n) {
    throw ShapeError(fmt::format("weights: expected {} values, got {} means and {} spreads",
                                 n, w.mean.size(), w.spread.size()));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(w.mean[i]) || !std::isfinite(w.spread[i])) {
      throw InvalidArgument(fmt::format("weights: non-finite value at {}", i));
    }
    if (w.kind == SpreadKind::Variance) {
      if (w.spread[i] < 0.0) {
        throw NegativeVariance(fmt::format("weights: variance {} at {}", w.spread[i], i));
      }
    } else if (w.spread[i] < w.mean[i] * w.mean[i] - kRepresentationEpsilon) {
      throw CorruptMoments(fmt::format("weights: second raw moment below mean^2 at {}", i));
    }
  }
  const auto out = static_cast<Eigen::Index>(w.shape.out);
  if (const auto* d = std::get_if<DeterministicBias>(&w.bias)) {
    if (d->values.size() != out) throw ShapeError("bias: length differs from output width");
    if (!d->values.allFinite()) throw InvalidArgument("bias: non-finite value");
  } else if (const auto* p = std::get_if<ProbabilisticBias>(&w.bias)) {
    if (p->mean.size() != out || p->variance.size() != out) {
      throw ShapeError("bias: length differs from output width");
    }
    if (!p->mean.allFinite() || !p->variance.allFinite()) {
      throw InvalidArgument("bias: non-finite value");
    }
    if ((p->variance < 0.0).any()) throw NegativeVariance("bias: negative variance");
  }
}

GaussianWeights with_spread_kind(const GaussianWeights& w, SpreadKind kind) {
  if (w.kind == kind) return w;
  GaussianWeights out = w;
  out.kind = kind;
  if (kind == SpreadKind::SecondRawMoment) {
    out.spread = w.spread + w.mean.square();
  } else {
    out.spread = (w.spread - w.mean.square()).max(0.0);
  }
  return out;
}

std::string layer_name(const LayerSpec& layer) {
  return std::visit(
      Overloaded{
          [](const DenseLayer& d) {
            return fmt::format("dense({}->{})", d.weights.shape.in, d.weights.shape.out);
          },
          [](const Conv2dLayer& c) {
            return fmt::format("conv2d({}->{},{}x{},s{})", c.weights.shape.in,
                               c.weights.shape.out, c.weights.shape.kernel_h,
                               c.weights.shape.kernel_w, c.stride);
          },
          [](const ReluLayer&) { return std::string("relu"); },
          [](const MaxPool2x2Layer&) { return std::string("maxpool2x2"); },
          [](const FlattenLayer&) { return std::string("flatten"); },
          [](const ConvertLayer& c) { return fmt::format("convert(to {})", to_string(c.to)); },
      },
      layer);
}

const GaussianWeights* layer_weights(const LayerSpec& layer) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) return &d->weights;
  if (const auto* c = std::get_if<Conv2dLayer>(&layer)) return &c->weights;
  return nullptr;
}

GaussianWeights* layer_weights(LayerSpec& layer) {
  if (auto* d = std::get_if<DenseLayer>(&layer)) return &d->weights;
  if (auto* c = std::get_if<Conv2dLayer>(&layer)) return &c->weights;
  return nullptr;
}

}  // namespace pfp
