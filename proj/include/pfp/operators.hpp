#pragma once

#include <cstddef>

#include "pfp/gaussian_tensor.hpp"
#include "pfp/layers.hpp"

// Closed-form moment propagation through single layers.
//
// Conventions: compute layers (dense, conv) read second raw moments and emit
// variances; ReLU reads variances and emits second raw moments; max pooling
// reads and emits variances. The *_det_input variants serve the first compute
// layer, whose input carries no variance at all.
//
// Every reduction accumulates in ascending index order (receptive fields in
// (channel, row, column) order), so results are bit-reproducible.

namespace pfp {

// Output extent of a valid (unpadded) convolution; throws ShapeError unless
// (extent - kernel) is a non-negative multiple of stride.
std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride);

Tensor dense_pfp(const Tensor& input, const GaussianWeights& w);
Tensor dense_pfp_det_input(const InputTensor& input, const GaussianWeights& w);

// Mean-only and variance-only halves of dense_pfp, for checking the fused
// kernel against separately evaluated paths.
Buffer<double> dense_mean_only(const Tensor& input, const GaussianWeights& w);
Buffer<double> dense_variance_only(const Tensor& input, const GaussianWeights& w);

Tensor conv2d_pfp(const Tensor& input, const GaussianWeights& w, std::size_t stride);
Tensor conv2d_pfp_det_input(const InputTensor& input, const GaussianWeights& w,
                            std::size_t stride);

Tensor relu_moment_match(const Tensor& input);

// 2x2 window, stride 2. Each window (a b / c d) reduces as
// max(max(a, b), max(c, d)) with pairwise Gaussian moment matching.
Tensor maxpool2_pfp(const Tensor& input);

Tensor flatten(const Tensor& input);
InputTensor flatten(const InputTensor& input);

}  // namespace pfp
