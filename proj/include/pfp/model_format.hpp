#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pfp/gaussian_tensor.hpp"
#include "pfp/model.hpp"

// On-disk containers. All integers are little-endian; tensors are IEEE-754
// binary32, row-major.
//
// Model file:
//   "PFPM" | version u32 | manifest_len u64 | manifest (UTF-8 JSON) | payload
//
// The manifest lists the layers in order. Compute layers reference their
// tensors by byte offset into the payload and element count:
//
//   {"calibration_factor": 1.0, "format_version": 1, "input_shape": [784],
//    "name": "mlp", "layers": [
//      {"type": "dense", "in_features": 784, "out_features": 100,
//       "bias": "probabilistic", "weight_spread": "variance",
//       "tensors": {"weight_mean": {"offset": 0, "count": 78400},
//                   "weight_var": {...}, "bias_mean": {...}, "bias_var": {...}}},
//      {"type": "relu"},
//      {"type": "conv2d", "in_channels": 1, "out_channels": 6, "kernel_h": 5,
//       "kernel_w": 5, "stride": 1, ...},
//      {"type": "maxpool2x2"}, {"type": "flatten"},
//      {"type": "convert", "to": "second_raw_moment"}]}
//
// Weights are always stored as mean + variance. Deterministic biases store
// only bias_mean. Tensors appear in layer order, then weight_mean,
// weight_var, bias_mean, bias_var; offsets are strictly increasing and the
// last tensor ends exactly at the end of the file.
//
// Tensor file:
//   "PFPT" | version u32 | rank u32 | dims (rank x u64) | dtype u32 (1 = f32) | payload

namespace pfp {

inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;

std::vector<std::uint8_t> encode_model(const ModelGraph& model);
ModelGraph decode_model(const std::vector<std::uint8_t>& bytes);

void save_model(const ModelGraph& model, const std::filesystem::path& path);

/// Reads, validates and prepares a model: weights of the first compute layer
/// are kept as variances (it sees deterministic input), all others are
/// converted to second raw moments.
ModelGraph load_model(const std::filesystem::path& path);

/// Multiplies every weight variance and probabilistic bias variance by
/// factor; means are untouched and the stored calibration factor is
/// multiplied too.
ModelGraph apply_calibration(const ModelGraph& model, double factor);

std::vector<std::uint8_t> encode_tensor(const InputTensor& t);
InputTensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void save_tensor(const InputTensor& t, const std::filesystem::path& path);
InputTensor load_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace pfp
