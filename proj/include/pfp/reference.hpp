#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "pfp/gaussian_tensor.hpp"
#include "pfp/model.hpp"

// Plain point-weight network used as the reference semantics: the mean
// network for zero-variance checks and one realization per Monte-Carlo
// sample. Built on Eigen products (dense GEMM, im2col convolution), which is
// a deliberately different route from the hand-rolled PFP kernels.

namespace pfp {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PointDense {
  RowMatrix weight;  // (out, in)
  Eigen::VectorXd bias;
};

struct PointConv {
  RowMatrix weight;  // (out, in * kernel_h * kernel_w)
  Eigen::VectorXd bias;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
};

struct PointRelu {};
struct PointMaxPool {};
struct PointFlatten {};

using PointLayer = std::variant<PointDense, PointConv, PointRelu, PointMaxPool, PointFlatten>;

struct PointNetwork {
  Shape input_shape;
  std::vector<PointLayer> layers;
};

// Network with every weight and bias at its mean. Convert layers vanish.
PointNetwork mean_network(const ModelGraph& model);

// Returns (batch, classes) logits.
InputTensor point_forward(const PointNetwork& net, const InputTensor& input);

}  // namespace pfp
