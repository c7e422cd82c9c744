#include "pfp/operators.hpp"

#include <vector>

#include <fmt/format.h>

#include "pfp/moments.hpp"

namespace pfp {

namespace {

void require_kind(const Tensor& t, SpreadKind kind, const char* op) {
  if (t.kind() != kind) {
    throw WrongSpreadKind(fmt::format("{}: expected {} input, got {}", op, to_string(kind),
                                      to_string(t.kind())));
  }
}

struct DenseGeometry {
  std::size_t rows = 0;  // flattened leading dimensions
  Shape out_shape;
};

DenseGeometry dense_geometry(const Shape& in_shape, const GaussianWeights& w, const char* op) {
  if (in_shape.empty() || in_shape.back() != w.shape.in) {
    throw ShapeError(fmt::format("{}: input {} does not end in {} features", op,
                                 shape_string(in_shape), w.shape.in));
  }
  if (w.shape.kernel_h != 1 || w.shape.kernel_w != 1) {
    throw ShapeError(fmt::format("{}: dense weights must not carry a kernel", op));
  }
  DenseGeometry g;
  g.out_shape = in_shape;
  g.out_shape.back() = w.shape.out;
  g.rows = element_count(in_shape) / w.shape.in;
  return g;
}

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t out_h, out_w;
  Shape out_shape;
};

ConvGeometry conv_geometry(const Shape& in_shape, const GaussianWeights& w,
                           std::size_t stride, const char* op) {
  if (in_shape.size() != 4) {
    throw ShapeError(fmt::format("{}: expected (batch, channels, h, w) input, got {}", op,
                                 shape_string(in_shape)));
  }
  if (in_shape[1] != w.shape.in) {
    throw ShapeError(fmt::format("{}: input has {} channels, weights expect {}", op,
                                 in_shape[1], w.shape.in));
  }
  ConvGeometry g{in_shape[0], in_shape[1], in_shape[2], in_shape[3], 0, 0, {}};
  g.out_h = conv_output_extent(g.height, w.shape.kernel_h, stride);
  g.out_w = conv_output_extent(g.width, w.shape.kernel_w, stride);
  g.out_shape = {g.batch, w.shape.out, g.out_h, g.out_w};
  return g;
}

// Fused dense kernel. `Term` maps (weight index, input mean, input spread,
// squared input mean) to the (mean, variance) contributions of one product.
template <class Term>
Tensor dense_kernel(const Buffer<double>& x_mean, const Buffer<double>* x_spread,
                    const GaussianWeights& w, const DenseGeometry& g, Term term) {
  const Buffer<double> x_sq = x_mean.square();
  const std::size_t in = w.shape.in;
  const std::size_t out = w.shape.out;
  Buffer<double> mean(static_cast<Eigen::Index>(g.rows * out));
  Buffer<double> var(mean.size());
  for (std::size_t r = 0; r < g.rows; ++r) {
    const double* xm = x_mean.data() + r * in;
    const double* xs = x_spread ? x_spread->data() + r * in : nullptr;
    const double* x2 = x_sq.data() + r * in;
    for (std::size_t i = 0; i < out; ++i) {
      double m = 0.0;
      double v = 0.0;
      const std::size_t row = i * in;
      for (std::size_t j = 0; j < in; ++j) {
        const auto [tm, tv] = term(row + j, xm[j], xs ? xs[j] : 0.0, x2[j]);
        m += tm;
        v += tv;
      }
      m += bias_mean(w.bias, i);
      v += bias_variance(w.bias, i);
      mean[r * out + i] = m;
      var[r * out + i] = v > 0.0 ? v : 0.0;
    }
  }
  return Tensor(g.out_shape, std::move(mean), std::move(var), SpreadKind::Variance);
}

// Raw-moment product term: E[w^2] E[x^2] - mu_w^2 mu_x^2, the same
// arithmetic as product_variance_raw. The weight raw moment is read directly
// when weights are stored that way.
struct RawMomentTerm {
  const GaussianWeights& w;
  std::pair<double, double> operator()(std::size_t k, double xm, double xs, double x2) const {
    const double wm = w.mean[k];
    return {wm * xm, w.second_raw_moment(k) * xs - (wm * wm) * x2};
  }
};

// First-layer term: deterministic x, so only weight variance contributes.
struct DeterministicInputTerm {
  const GaussianWeights& w;
  std::pair<double, double> operator()(std::size_t k, double x, double, double) const {
    return {w.mean[k] * x, w.variance(k) * x * x};
  }
};

template <class Term>
Tensor conv_kernel(const Buffer<double>& x_mean, const Buffer<double>* x_spread,
                   const GaussianWeights& w, std::size_t stride, const ConvGeometry& g,
                   Term term) {
  const auto& ws = w.shape;
  const Buffer<double> x_sq = x_mean.square();
  const std::size_t plane = g.height * g.width;
  const std::size_t out_plane = g.out_h * g.out_w;
  Buffer<double> mean(static_cast<Eigen::Index>(element_count(g.out_shape)));
  Buffer<double> var(mean.size());
  std::vector<double> acc_m(g.out_w);
  std::vector<double> acc_v(g.out_w);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const std::size_t in_base = b * g.channels * plane;
    for (std::size_t u = 0; u < ws.out; ++u) {
      const double bm = bias_mean(w.bias, u);
      const double bv = bias_variance(w.bias, u);
      for (std::size_t e = 0; e < g.out_h; ++e) {
        std::fill(acc_m.begin(), acc_m.end(), 0.0);
        std::fill(acc_v.begin(), acc_v.end(), 0.0);
        for (std::size_t c = 0; c < ws.in; ++c) {
          for (std::size_t r = 0; r < ws.kernel_h; ++r) {
            const std::size_t row_off = in_base + c * plane + (e * stride + r) * g.width;
            for (std::size_t s = 0; s < ws.kernel_w; ++s) {
              const std::size_t k = ((u * ws.in + c) * ws.kernel_h + r) * ws.kernel_w + s;
              const double* xm = x_mean.data() + row_off + s;
              const double* xs = x_spread ? x_spread->data() + row_off + s : nullptr;
              const double* x2 = x_sq.data() + row_off + s;
              for (std::size_t f = 0; f < g.out_w; ++f) {
                const auto [tm, tv] = term(k, xm[f * stride], xs ? xs[f * stride] : 0.0, x2[f * stride]);
                acc_m[f] += tm;
                acc_v[f] += tv;
              }
            }
          }
        }
        const std::size_t out_off = (b * ws.out + u) * out_plane + e * g.out_w;
        for (std::size_t f = 0; f < g.out_w; ++f) {
          mean[out_off + f] = acc_m[f] + bm;
          const double v = acc_v[f] + bv;
          var[out_off + f] = v > 0.0 ? v : 0.0;
        }
      }
    }
  }
  return Tensor(g.out_shape, std::move(mean), std::move(var), SpreadKind::Variance);
}

}  // namespace

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (kernel == 0 || extent < kernel || (extent - kernel) % stride != 0) {
    throw ShapeError(fmt::format(
        "conv2d: extent {} with kernel {} and stride {} gives a non-integer output size",
        extent, kernel, stride));
  }
  return (extent - kernel) / stride + 1;
}

Tensor dense_pfp(const Tensor& input, const GaussianWeights& w) {
  require_kind(input, SpreadKind::SecondRawMoment, "dense_pfp");
  const auto g = dense_geometry(input.shape(), w, "dense_pfp");
  return dense_kernel(input.mean(), &input.spread(), w, g, RawMomentTerm{w});
}

Tensor dense_pfp_det_input(const InputTensor& input, const GaussianWeights& w) {
  const auto g = dense_geometry(input.shape(), w, "dense_pfp_det_input");
  return dense_kernel(input.values(), nullptr, w, g, DeterministicInputTerm{w});
}

Buffer<double> dense_mean_only(const Tensor& input, const GaussianWeights& w) {
  require_kind(input, SpreadKind::SecondRawMoment, "dense_mean_only");
  const auto g = dense_geometry(input.shape(), w, "dense_mean_only");
  const std::size_t in = w.shape.in;
  const std::size_t out = w.shape.out;
  Buffer<double> mean(static_cast<Eigen::Index>(g.rows * out));
  for (std::size_t r = 0; r < g.rows; ++r) {
    const double* xm = input.mean().data() + r * in;
    for (std::size_t i = 0; i < out; ++i) {
      double m = 0.0;
      for (std::size_t j = 0; j < in; ++j) m += w.mean[i * in + j] * xm[j];
      mean[r * out + i] = m + bias_mean(w.bias, i);
    }
  }
  return mean;
}

Buffer<double> dense_variance_only(const Tensor& input, const GaussianWeights& w) {
  require_kind(input, SpreadKind::SecondRawMoment, "dense_variance_only");
  const auto g = dense_geometry(input.shape(), w, "dense_variance_only");
  const std::size_t in = w.shape.in;
  const std::size_t out = w.shape.out;
  Buffer<double> var(static_cast<Eigen::Index>(g.rows * out));
  for (std::size_t r = 0; r < g.rows; ++r) {
    const double* xm = input.mean().data() + r * in;
    const double* xs = input.spread().data() + r * in;
    for (std::size_t i = 0; i < out; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < in; ++j) {
        const std::size_t k = i * in + j;
        v += product_variance_raw(w.mean[k], w.second_raw_moment(k), xm[j], xs[j]);
      }
      v += bias_variance(w.bias, i);
      var[r * out + i] = v > 0.0 ? v : 0.0;
    }
  }
  return var;
}

Tensor conv2d_pfp(const Tensor& input, const GaussianWeights& w, std::size_t stride) {
  require_kind(input, SpreadKind::SecondRawMoment, "conv2d_pfp");
  const auto g = conv_geometry(input.shape(), w, stride, "conv2d_pfp");
  return conv_kernel(input.mean(), &input.spread(), w, stride, g, RawMomentTerm{w});
}

Tensor conv2d_pfp_det_input(const InputTensor& input, const GaussianWeights& w,
                            std::size_t stride) {
  const auto g = conv_geometry(input.shape(), w, stride, "conv2d_pfp_det_input");
  return conv_kernel(input.values(), nullptr, w, stride, g, DeterministicInputTerm{w});
}

Tensor relu_moment_match(const Tensor& input) {
  require_kind(input, SpreadKind::Variance, "relu_moment_match");
  Buffer<double> mean(input.mean().size());
  Buffer<double> srm(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const auto m = relu_moments(input.mean()[i], input.spread()[i]);
    mean[i] = m.mean;
    srm[i] = m.srm;
  }
  return Tensor(input.shape(), std::move(mean), std::move(srm), SpreadKind::SecondRawMoment);
}

Tensor maxpool2_pfp(const Tensor& input) {
  require_kind(input, SpreadKind::Variance, "maxpool2_pfp");
  const auto& s = input.shape();
  if (s.size() != 4) {
    throw ShapeError("maxpool2_pfp: expected (batch, channels, h, w) input, got " +
                     shape_string(s));
  }
  if (s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw ShapeError("maxpool2_pfp: spatial dims must be even, got " + shape_string(s));
  }
  const std::size_t planes = s[0] * s[1];
  const std::size_t h = s[2], w = s[3], oh = h / 2, ow = w / 2;
  Buffer<double> mean(static_cast<Eigen::Index>(planes * oh * ow));
  Buffer<double> var(mean.size());
  const auto& xm = input.mean();
  const auto& xv = input.spread();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t a = p * h * w + (2 * i) * w + 2 * j;
        const std::size_t b = a + 1, c = a + w, d = a + w + 1;
        const auto top = gaussian_max_moments(xm[a], xv[a], xm[b], xv[b]);
        const auto bottom = gaussian_max_moments(xm[c], xv[c], xm[d], xv[d]);
        const auto m = gaussian_max_moments(top.mean, top.var, bottom.mean, bottom.var);
        const std::size_t o = p * oh * ow + i * ow + j;
        mean[o] = m.mean;
        var[o] = m.var;
      }
    }
  }
  return Tensor({s[0], s[1], oh, ow}, std::move(mean), std::move(var), SpreadKind::Variance);
}

namespace {

Shape flattened(const Shape& s) {
  if (s.empty()) return {1, 1};
  return {s[0], s[0] == 0 ? 0 : element_count(s) / s[0]};
}

}  // namespace

Tensor flatten(const Tensor& input) { return input.reshaped(flattened(input.shape())); }

InputTensor flatten(const InputTensor& input) {
  return input.reshaped(flattened(input.shape()));
}

}  // namespace pfp
