#include "pfp/model.hpp"

#include <algorithm>
#include <cmath>
#include <variant>

#include <fmt/format.h>

#include "pfp/operators.hpp"
#include "pfp/parallel.hpp"

namespace pfp {

const char* to_string(Flow flow) {
  switch (flow) {
    case Flow::Deterministic: return "deterministic";
    case Flow::Variance: return "variance";
    case Flow::SecondRawMoment: return "second_raw_moment";
  }
  return "?";
}

namespace {

Flow flow_of(SpreadKind kind) {
  return kind == SpreadKind::Variance ? Flow::Variance : Flow::SecondRawMoment;
}

[[noreturn]] void mismatch(std::size_t index, const LayerSpec& layer, const std::string& why) {
  throw ConventionMismatch(fmt::format("layer {} ({}): {}", index, layer_name(layer), why));
}

}  // namespace

ExecutionPlan plan_model(const ModelGraph& model) {
  if (model.layers.empty()) throw ConventionMismatch("model has no layers");
  if (model.input_shape.empty() || element_count(model.input_shape) == 0) {
    throw ShapeError("model input shape must be non-empty");
  }
  ExecutionPlan plan;
  Flow flow = Flow::Deterministic;
  Shape shape = model.input_shape;
  bool after_pool = false;  // last non-flatten layer was a max pool

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    PlanStep step;
    step.layer = i;
    step.input = flow;

    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      if (flow == Flow::Variance) {
        if (!after_pool) mismatch(i, layer, "compute layer expects second raw moments, got variances");
        step.convert_input = true;
      }
      const auto& ws = dense->weights.shape;
      if (shape.size() != 1) {
        throw ShapeError(fmt::format("layer {} ({}): input {} must be flattened first", i,
                                     layer_name(layer), shape_string(shape)));
      }
      if (shape[0] != ws.in) {
        throw ShapeError(fmt::format("layer {} ({}): input width {} != {}", i,
                                     layer_name(layer), shape[0], ws.in));
      }
      shape = {ws.out};
      flow = Flow::Variance;
      after_pool = false;
    } else if (const auto* conv = std::get_if<Conv2dLayer>(&layer)) {
      if (flow == Flow::Variance) {
        if (!after_pool) mismatch(i, layer, "compute layer expects second raw moments, got variances");
        step.convert_input = true;
      }
      const auto& ws = conv->weights.shape;
      if (shape.size() != 3) {
        throw ShapeError(fmt::format("layer {} ({}): expected (channels, h, w), got {}", i,
                                     layer_name(layer), shape_string(shape)));
      }
      if (shape[0] != ws.in) {
        throw ShapeError(fmt::format("layer {} ({}): {} input channels != {}", i,
                                     layer_name(layer), shape[0], ws.in));
      }
      try {
        shape = {ws.out, conv_output_extent(shape[1], ws.kernel_h, conv->stride),
                 conv_output_extent(shape[2], ws.kernel_w, conv->stride)};
      } catch (const ShapeError& e) {
        throw ShapeError(fmt::format("layer {}: {}", i, e.what()));
      }
      flow = Flow::Variance;
      after_pool = false;
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      if (flow != Flow::Variance) {
        mismatch(i, layer, fmt::format("activation expects variances, got {}", to_string(flow)));
      }
      flow = Flow::SecondRawMoment;
      after_pool = false;
    } else if (std::holds_alternative<MaxPool2x2Layer>(layer)) {
      if (flow == Flow::Deterministic) mismatch(i, layer, "max pool needs a Gaussian input");
      if (flow == Flow::SecondRawMoment) step.convert_input = true;
      if (shape.size() != 3 || shape[1] % 2 != 0 || shape[2] % 2 != 0) {
        throw ShapeError(fmt::format("layer {} (maxpool2x2): needs even (channels, h, w), got {}",
                                     i, shape_string(shape)));
      }
      shape = {shape[0], shape[1] / 2, shape[2] / 2};
      flow = Flow::Variance;
      after_pool = true;
    } else if (std::holds_alternative<FlattenLayer>(layer)) {
      shape = {element_count(shape)};
    } else if (const auto* convert = std::get_if<ConvertLayer>(&layer)) {
      if (flow == Flow::Deterministic) mismatch(i, layer, "nothing to convert on deterministic input");
      if (flow == flow_of(convert->to)) mismatch(i, layer, "input already in the target representation");
      flow = flow_of(convert->to);
      after_pool = false;
    }
    step.output = flow;
    step.output_shape = shape;
    plan.steps.push_back(step);
  }

  if (flow == Flow::Deterministic) throw ConventionMismatch("model has no compute layer");
  plan.output_shape = shape;
  plan.classes = element_count(shape);
  plan.convert_output = flow == Flow::SecondRawMoment;
  return plan;
}

void validate_model(const ModelGraph& model) {
  if (!(model.calibration_factor > 0.0) || !std::isfinite(model.calibration_factor)) {
    throw InvalidArgument("calibration factor must be positive and finite");
  }
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (const auto* w = layer_weights(model.layers[i])) {
      try {
        check_weights(*w);
      } catch (const ShapeError& e) {
        throw ShapeError(fmt::format("layer {}: {}", i, e.what()));
      }
    }
    if (const auto* conv = std::get_if<Conv2dLayer>(&model.layers[i]); conv && conv->stride == 0) {
      throw ShapeError(fmt::format("layer {}: stride must be positive", i));
    }
  }
  plan_model(model);
}

bool is_linear(const ModelGraph& model) {
  for (const auto& layer : model.layers) {
    if (std::holds_alternative<ReluLayer>(layer) || std::holds_alternative<MaxPool2x2Layer>(layer)) {
      return false;
    }
  }
  return true;
}

InputTensor slice_batch(const InputTensor& t, std::size_t begin, std::size_t end) {
  const std::size_t b = t.batch();
  if (begin > end || end > b) throw ShapeError("slice_batch: range out of bounds");
  const std::size_t row = b == 0 ? 0 : t.size() / b;
  Shape shape = t.shape();
  shape[0] = end - begin;
  return InputTensor(std::move(shape),
                     t.values().segment(static_cast<Eigen::Index>(begin * row),
                                        static_cast<Eigen::Index>((end - begin) * row)));
}

namespace {

Tensor run_chain(const ModelGraph& model, const ExecutionPlan& plan, const InputTensor& input) {
  InputTensor det = input;
  Tensor t;
  bool gaussian = false;
  for (const auto& step : plan.steps) {
    const auto& layer = model.layers[step.layer];
    if (step.convert_input) {
      t = convert_spread(t, step.input == Flow::Variance ? SpreadKind::SecondRawMoment
                                                         : SpreadKind::Variance);
    }
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      t = gaussian ? dense_pfp(t, dense->weights) : dense_pfp_det_input(det, dense->weights);
      gaussian = true;
    } else if (const auto* conv = std::get_if<Conv2dLayer>(&layer)) {
      t = gaussian ? conv2d_pfp(t, conv->weights, conv->stride)
                   : conv2d_pfp_det_input(det, conv->weights, conv->stride);
      gaussian = true;
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      t = relu_moment_match(t);
    } else if (std::holds_alternative<MaxPool2x2Layer>(layer)) {
      t = maxpool2_pfp(t);
    } else if (std::holds_alternative<FlattenLayer>(layer)) {
      if (gaussian) {
        t = flatten(t);
      } else {
        det = flatten(det);
      }
    } else if (const auto* convert = std::get_if<ConvertLayer>(&layer)) {
      t = convert_spread(t, convert->to);
    }
  }
  if (plan.convert_output) t = convert_spread(t, SpreadKind::Variance);
  return t;
}

}  // namespace

LogitDistribution forward(const ModelGraph& model, const InputTensor& input, unsigned threads) {
  const auto plan = plan_model(model);
  const auto& s = input.shape();
  if (s.size() != model.input_shape.size() + 1 ||
      !std::equal(model.input_shape.begin(), model.input_shape.end(), s.begin() + 1)) {
    throw ShapeError(fmt::format("input {} does not match model input (batch, {})",
                                 shape_string(s), shape_string(model.input_shape).substr(1)));
  }
  LogitDistribution out;
  out.batch = input.batch();
  out.classes = plan.classes;
  out.mean.resize(static_cast<Eigen::Index>(out.batch * out.classes));
  out.var.resize(out.mean.size());
  parallel_for(out.batch, threads, [&](std::size_t begin, std::size_t end) {
    const auto result = run_chain(model, plan, slice_batch(input, begin, end));
    const auto offset = static_cast<Eigen::Index>(begin * out.classes);
    out.mean.segment(offset, result.mean().size()) = result.mean();
    out.var.segment(offset, result.spread().size()) = result.spread();
  });
  return out;
}

}  // namespace pfp
