#include "pfp/reference.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "pfp/operators.hpp"

namespace pfp {

namespace {

Eigen::VectorXd bias_means(const GaussianWeights& w) {
  Eigen::VectorXd b(static_cast<Eigen::Index>(w.shape.out));
  for (std::size_t i = 0; i < w.shape.out; ++i) b[static_cast<Eigen::Index>(i)] = bias_mean(w.bias, i);
  return b;
}

RowMatrix weight_means(const GaussianWeights& w) {
  return Eigen::Map<const RowMatrix>(w.mean.data(), static_cast<Eigen::Index>(w.shape.out),
                                     static_cast<Eigen::Index>(w.shape.fan_in()));
}

// Activations are carried as a (batch, features) row-major matrix together
// with the per-item shape.
struct Activations {
  RowMatrix values;
  Shape item_shape;
};

void apply(const PointDense& d, Activations& a) {
  if (a.item_shape.size() != 1 || a.item_shape[0] != static_cast<std::size_t>(d.weight.cols())) {
    throw ShapeError("point dense: input width mismatch " + shape_string(a.item_shape));
  }
  RowMatrix out = a.values * d.weight.transpose();
  out.rowwise() += d.bias.transpose();
  a.values = std::move(out);
  a.item_shape = {static_cast<std::size_t>(d.weight.rows())};
}

void apply(const PointConv& c, Activations& a) {
  if (a.item_shape.size() != 3 || a.item_shape[0] != c.in_channels) {
    throw ShapeError("point conv: input shape mismatch " + shape_string(a.item_shape));
  }
  const std::size_t h = a.item_shape[1], w = a.item_shape[2];
  const std::size_t oh = conv_output_extent(h, c.kernel_h, c.stride);
  const std::size_t ow = conv_output_extent(w, c.kernel_w, c.stride);
  const auto patch = static_cast<Eigen::Index>(c.in_channels * c.kernel_h * c.kernel_w);
  const auto positions = static_cast<Eigen::Index>(oh * ow);
  const auto out_channels = c.weight.rows();
  RowMatrix out(a.values.rows(), out_channels * positions);
  RowMatrix cols(patch, positions);
  for (Eigen::Index b = 0; b < a.values.rows(); ++b) {
    const double* x = a.values.row(b).data();
    for (std::size_t ch = 0; ch < c.in_channels; ++ch) {
      for (std::size_t r = 0; r < c.kernel_h; ++r) {
        for (std::size_t s = 0; s < c.kernel_w; ++s) {
          const auto row = static_cast<Eigen::Index>((ch * c.kernel_h + r) * c.kernel_w + s);
          for (std::size_t e = 0; e < oh; ++e) {
            for (std::size_t f = 0; f < ow; ++f) {
              cols(row, static_cast<Eigen::Index>(e * ow + f)) =
                  x[ch * h * w + (e * c.stride + r) * w + f * c.stride + s];
            }
          }
        }
      }
    }
    RowMatrix y = c.weight * cols;
    y.colwise() += c.bias;
    out.row(b) = Eigen::Map<const Eigen::RowVectorXd>(y.data(), y.size());
  }
  a.values = std::move(out);
  a.item_shape = {static_cast<std::size_t>(out_channels), oh, ow};
}

void apply(const PointRelu&, Activations& a) { a.values = a.values.cwiseMax(0.0); }

void apply(const PointMaxPool&, Activations& a) {
  if (a.item_shape.size() != 3 || a.item_shape[1] % 2 || a.item_shape[2] % 2) {
    throw ShapeError("point maxpool: needs even (channels, h, w), got " + shape_string(a.item_shape));
  }
  const std::size_t ch = a.item_shape[0], h = a.item_shape[1], w = a.item_shape[2];
  const std::size_t oh = h / 2, ow = w / 2;
  RowMatrix out(a.values.rows(), static_cast<Eigen::Index>(ch * oh * ow));
  for (Eigen::Index b = 0; b < a.values.rows(); ++b) {
    const double* x = a.values.row(b).data();
    for (std::size_t p = 0; p < ch; ++p) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          const double* q = x + p * h * w + 2 * i * w + 2 * j;
          out(b, static_cast<Eigen::Index>(p * oh * ow + i * ow + j)) =
              std::max(std::max(q[0], q[1]), std::max(q[w], q[w + 1]));
        }
      }
    }
  }
  a.values = std::move(out);
  a.item_shape = {ch, oh, ow};
}

void apply(const PointFlatten&, Activations& a) { a.item_shape = {element_count(a.item_shape)}; }

}  // namespace

PointNetwork mean_network(const ModelGraph& model) {
  PointNetwork net;
  net.input_shape = model.input_shape;
  for (const auto& layer : model.layers) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      net.layers.emplace_back(PointDense{weight_means(d->weights), bias_means(d->weights)});
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      const auto& s = c->weights.shape;
      net.layers.emplace_back(PointConv{weight_means(c->weights), bias_means(c->weights), s.in,
                                        s.kernel_h, s.kernel_w, c->stride});
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      net.layers.emplace_back(PointRelu{});
    } else if (std::holds_alternative<MaxPool2x2Layer>(layer)) {
      net.layers.emplace_back(PointMaxPool{});
    } else if (std::holds_alternative<FlattenLayer>(layer)) {
      net.layers.emplace_back(PointFlatten{});
    }
  }
  return net;
}

InputTensor point_forward(const PointNetwork& net, const InputTensor& input) {
  const auto& s = input.shape();
  if (s.size() != net.input_shape.size() + 1 ||
      !std::equal(net.input_shape.begin(), net.input_shape.end(), s.begin() + 1)) {
    throw ShapeError("point_forward: input " + shape_string(s) + " does not match network");
  }
  const auto batch = static_cast<Eigen::Index>(input.batch());
  Activations a{Eigen::Map<const RowMatrix>(input.values().data(), batch,
                                            batch == 0 ? 0 : input.values().size() / batch),
                net.input_shape};
  for (const auto& layer : net.layers) {
    std::visit([&a](const auto& l) { apply(l, a); }, layer);
  }
  const auto classes = static_cast<std::size_t>(a.values.cols());
  Buffer<double> flat = Eigen::Map<const Buffer<double>>(a.values.data(), a.values.size());
  return InputTensor({static_cast<std::size_t>(batch), classes}, std::move(flat));
}

}  // namespace pfp
