#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pfp/gaussian_tensor.hpp"
#include "pfp/layers.hpp"

namespace pfp {

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Ordered layer chain plus metadata. input_shape excludes the batch
/// dimension. calibration_factor records the cumulative variance scaling
/// already applied to the stored weights.
struct ModelGraph {
  std::string name;
  Shape input_shape;
  std::vector<LayerSpec> layers;
  double calibration_factor = 1.0;
  std::uint32_t format_version = kModelFormatVersion;
};

/// Per-class Gaussian logits at the network output, batch-major.
struct LogitDistribution {
  std::size_t batch = 0;
  std::size_t classes = 0;
  Buffer<double> mean;
  Buffer<double> var;

  double mean_at(std::size_t item, std::size_t cls) const { return mean[item * classes + cls]; }
  double var_at(std::size_t item, std::size_t cls) const { return var[item * classes + cls]; }
};

// Representation of the value flowing between two layers.
enum class Flow { Deterministic, Variance, SecondRawMoment };

const char* to_string(Flow flow);

struct PlanStep {
  std::size_t layer = 0;
  // Sanctioned conversion applied to the layer's input (MaxPool interfaces).
  bool convert_input = false;
  Flow input = Flow::Deterministic;
  Flow output = Flow::Deterministic;
  Shape output_shape;  // per item
};

/// Resolved execution order with every representation change spelled out.
struct ExecutionPlan {
  std::vector<PlanStep> steps;
  Shape output_shape;  // per item
  std::size_t classes = 0;
  // The last layer left second raw moments; converted when reading logits.
  bool convert_output = false;
};

// Resolves the I/O conventions of the chain. Throws ConventionMismatch or
// ShapeError. Only two conversions are ever inserted implicitly: SRM->Var in
// front of a max pool and Var->SRM between a max pool and the next compute
// layer. Everything else must be an explicit ConvertLayer.
ExecutionPlan plan_model(const ModelGraph& model);

// Weights, calibration factor and conventions; throws on the first problem.
void validate_model(const ModelGraph& model);

// True when the chain has no ReLU or max pool.
bool is_linear(const ModelGraph& model);

/// Single probabilistic forward pass. The batch is split across `threads`
/// workers; results do not depend on the split.
LogitDistribution forward(const ModelGraph& model, const InputTensor& input,
                          unsigned threads = 1);

// Rows [begin, end) of the leading (batch) dimension.
InputTensor slice_batch(const InputTensor& t, std::size_t begin, std::size_t end);

}  // namespace pfp
