#include "pfp/model_format.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

namespace pfp {

using nlohmann::json;

namespace {

constexpr char kModelMagic[4] = {'P', 'F', 'P', 'M'};
constexpr char kTensorMagic[4] = {'P', 'F', 'P', 'T'};
constexpr std::size_t kModelHeaderSize = 16;

// Little-endian primitives.

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const auto f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

float get_f32(const std::uint8_t* p) {
  const std::uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

// ---- manifest helpers ------------------------------------------------------

[[noreturn]] void manifest_error(const std::string& what) { throw ManifestError("manifest: " + what); }

const json& field(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) manifest_error(fmt::format("missing field '{}'", key));
  return obj.at(key);
}

std::uint64_t get_count(const json& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_number_unsigned()) manifest_error(fmt::format("'{}' must be a non-negative integer", key));
  return v.get<std::uint64_t>();
}

std::string get_string(const json& obj, const char* key) {
  const auto& v = field(obj, key);
  if (!v.is_string()) manifest_error(fmt::format("'{}' must be a string", key));
  return v.get<std::string>();
}

// Sequential reader of payload tensors, enforcing increasing offsets and
// exact element counts.
class PayloadReader {
 public:
  PayloadReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  Eigen::ArrayXd read(const json& tensors, const char* key, std::uint64_t expected) {
    const auto& ref = field(tensors, key);
    const auto offset = get_count(ref, "offset");
    const auto count = get_count(ref, "count");
    if (count != expected) {
      manifest_error(fmt::format("tensor '{}' declares {} values, shape needs {}", key, count, expected));
    }
    if (started_ && offset < end_) {
      manifest_error(fmt::format("tensor '{}' offset {} not after previous end {}", key, offset, end_));
    }
    if (offset > size_ || count > (size_ - offset) / 4) {
      manifest_error(fmt::format("tensor '{}' [{}, +{} values) exceeds payload of {} bytes", key,
                                 offset, count, size_));
    }
    Eigen::ArrayXd out(static_cast<Eigen::Index>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
      const double v = get_f32(data_ + offset + 4 * i);
      if (!std::isfinite(v)) manifest_error(fmt::format("tensor '{}' holds a non-finite value", key));
      out[static_cast<Eigen::Index>(i)] = v;
    }
    started_ = true;
    end_ = offset + 4 * count;
    return out;
  }

  void finish() const {
    const std::size_t used = started_ ? end_ : 0;
    if (used != size_) {
      manifest_error(fmt::format("payload has {} bytes, tensors cover {}", size_, used));
    }
  }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  bool started_ = false;
  std::uint64_t end_ = 0;
};

void require_nonnegative(const Eigen::ArrayXd& v, const std::string& what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] < 0.0) throw NegativeVariance(fmt::format("{}: variance {} at {}", what, v[i], i));
  }
}

GaussianWeights read_weights(const json& layer, std::size_t index, const WeightShape& shape,
                             PayloadReader& payload) {
  const auto& tensors = field(layer, "tensors");
  const std::string where = fmt::format("layer {}", index);
  if (get_string(layer, "weight_spread") != "variance") {
    manifest_error(where + ": weights must be stored as variances");
  }
  GaussianWeights w;
  w.shape = shape;
  w.kind = SpreadKind::Variance;
  w.mean = payload.read(tensors, "weight_mean", shape.count());
  w.spread = payload.read(tensors, "weight_var", shape.count());
  require_nonnegative(w.spread, where + " weights");
  const auto bias = get_string(layer, "bias");
  if (bias == "none") {
    w.bias = NoBias{};
  } else if (bias == "deterministic") {
    w.bias = DeterministicBias{payload.read(tensors, "bias_mean", shape.out)};
  } else if (bias == "probabilistic") {
    ProbabilisticBias b;
    b.mean = payload.read(tensors, "bias_mean", shape.out);
    b.variance = payload.read(tensors, "bias_var", shape.out);
    require_nonnegative(b.variance, where + " bias");
    w.bias = std::move(b);
  } else {
    manifest_error(fmt::format("{}: unknown bias configuration '{}'", where, bias));
  }
  return w;
}

std::size_t positive_dim(const json& layer, const char* key) {
  const auto v = get_count(layer, key);
  if (v == 0 || v > (std::uint64_t{1} << 32)) manifest_error(fmt::format("'{}' = {} out of range", key, v));
  return static_cast<std::size_t>(v);
}

// ---- encoding --------------------------------------------------------------

struct PayloadWriter {
  std::vector<std::uint8_t> bytes;

  json append(const Eigen::ArrayXd& values) {
    json ref = {{"offset", bytes.size()}, {"count", values.size()}};
    for (Eigen::Index i = 0; i < values.size(); ++i) put_f32(bytes, values[i]);
    return ref;
  }
};

json encode_compute(const GaussianWeights& weights, PayloadWriter& payload) {
  const auto w = with_spread_kind(weights, SpreadKind::Variance);
  json tensors;
  tensors["weight_mean"] = payload.append(w.mean);
  tensors["weight_var"] = payload.append(w.spread);
  if (const auto* d = std::get_if<DeterministicBias>(&w.bias)) {
    tensors["bias_mean"] = payload.append(d->values);
  } else if (const auto* p = std::get_if<ProbabilisticBias>(&w.bias)) {
    tensors["bias_mean"] = payload.append(p->mean);
    tensors["bias_var"] = payload.append(p->variance);
  }
  return json{{"bias", bias_kind_name(w.bias)}, {"weight_spread", "variance"}, {"tensors", tensors}};
}

}  // namespace

std::vector<std::uint8_t> encode_model(const ModelGraph& model) {
  if (model.layers.empty()) throw ManifestError("save_model: refusing to write a model without layers");
  validate_model(model);

  PayloadWriter payload;
  json layers = json::array();
  for (const auto& layer : model.layers) {
    json entry;
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      entry = encode_compute(d->weights, payload);
      entry["type"] = "dense";
      entry["in_features"] = d->weights.shape.in;
      entry["out_features"] = d->weights.shape.out;
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      entry = encode_compute(c->weights, payload);
      entry["type"] = "conv2d";
      entry["in_channels"] = c->weights.shape.in;
      entry["out_channels"] = c->weights.shape.out;
      entry["kernel_h"] = c->weights.shape.kernel_h;
      entry["kernel_w"] = c->weights.shape.kernel_w;
      entry["stride"] = c->stride;
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      entry = {{"type", "relu"}};
    } else if (std::holds_alternative<MaxPool2x2Layer>(layer)) {
      entry = {{"type", "maxpool2x2"}};
    } else if (std::holds_alternative<FlattenLayer>(layer)) {
      entry = {{"type", "flatten"}};
    } else if (const auto* cv = std::get_if<ConvertLayer>(&layer)) {
      entry = {{"type", "convert"}, {"to", to_string(cv->to)}};
    }
    layers.push_back(std::move(entry));
  }
  const json manifest = {{"format_version", kModelFormatVersion},
                         {"name", model.name},
                         {"input_shape", model.input_shape},
                         {"calibration_factor", model.calibration_factor},
                         {"layers", layers}};
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
  put_u32(out, kModelFormatVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.bytes.begin(), payload.bytes.end());
  return out;
}

ModelGraph decode_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    throw BadMagic("model file: missing PFPM magic");
  }
  if (bytes.size() < kModelHeaderSize) throw ManifestError("model file: truncated header");
  const auto version = get_u32(bytes.data() + 4);
  if (version != kModelFormatVersion) {
    throw UnsupportedVersion(fmt::format("model file: version {} (supported: {})", version,
                                         kModelFormatVersion));
  }
  const auto manifest_len = get_u64(bytes.data() + 8);
  if (manifest_len > bytes.size() - kModelHeaderSize) {
    throw ManifestError(fmt::format("model file: manifest length {} exceeds file", manifest_len));
  }
  const auto* manifest_begin = bytes.data() + kModelHeaderSize;
  json manifest;
  try {
    manifest = json::parse(manifest_begin, manifest_begin + manifest_len);
  } catch (const json::exception& e) {
    throw ManifestError(std::string("manifest: invalid JSON: ") + e.what());
  }
  if (!manifest.is_object()) manifest_error("top level must be an object");
  if (get_count(manifest, "format_version") != version) manifest_error("format_version disagrees with header");

  ModelGraph model;
  model.format_version = version;
  model.name = get_string(manifest, "name");
  const auto& factor = field(manifest, "calibration_factor");
  if (!factor.is_number()) manifest_error("'calibration_factor' must be a number");
  model.calibration_factor = factor.get<double>();
  if (!(model.calibration_factor > 0.0) || !std::isfinite(model.calibration_factor)) {
    manifest_error("'calibration_factor' must be positive");
  }
  const auto& input_shape = field(manifest, "input_shape");
  if (!input_shape.is_array() || input_shape.empty()) manifest_error("'input_shape' must be a non-empty array");
  for (const auto& d : input_shape) {
    if (!d.is_number_unsigned() || d.get<std::uint64_t>() == 0 ||
        d.get<std::uint64_t>() > (std::uint64_t{1} << 32)) {
      manifest_error("'input_shape' entries must be positive integers");
    }
    model.input_shape.push_back(d.get<std::size_t>());
  }

  const auto& layers = field(manifest, "layers");
  if (!layers.is_array() || layers.empty()) manifest_error("'layers' must be a non-empty array");
  PayloadReader payload(manifest_begin + manifest_len,
                        bytes.size() - kModelHeaderSize - static_cast<std::size_t>(manifest_len));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& entry = layers[i];
    const auto type = get_string(entry, "type");
    if (type == "dense") {
      WeightShape s{positive_dim(entry, "out_features"), positive_dim(entry, "in_features"), 1, 1};
      model.layers.emplace_back(DenseLayer{read_weights(entry, i, s, payload)});
    } else if (type == "conv2d") {
      WeightShape s{positive_dim(entry, "out_channels"), positive_dim(entry, "in_channels"),
                    positive_dim(entry, "kernel_h"), positive_dim(entry, "kernel_w")};
      const auto stride = positive_dim(entry, "stride");
      model.layers.emplace_back(Conv2dLayer{read_weights(entry, i, s, payload), stride});
    } else if (type == "relu") {
      model.layers.emplace_back(ReluLayer{});
    } else if (type == "maxpool2x2") {
      model.layers.emplace_back(MaxPool2x2Layer{});
    } else if (type == "flatten") {
      model.layers.emplace_back(FlattenLayer{});
    } else if (type == "convert") {
      const auto to = get_string(entry, "to");
      if (to == "variance") {
        model.layers.emplace_back(ConvertLayer{SpreadKind::Variance});
      } else if (to == "second_raw_moment") {
        model.layers.emplace_back(ConvertLayer{SpreadKind::SecondRawMoment});
      } else {
        manifest_error(fmt::format("layer {}: unknown conversion target '{}'", i, to));
      }
    } else {
      manifest_error(fmt::format("layer {}: unknown type '{}'", i, type));
    }
  }
  payload.finish();

  ExecutionPlan plan;
  try {
    plan = plan_model(model);
  } catch (const ShapeError& e) {
    throw ManifestError(std::string("manifest: shape mismatch: ") + e.what());
  }

  // Kind each operator reads directly: the first compute layer sees
  // deterministic input and uses variances, the rest use raw moments.
  for (const auto& step : plan.steps) {
    if (auto* w = layer_weights(model.layers[step.layer])) {
      if (step.input != Flow::Deterministic) *w = with_spread_kind(*w, SpreadKind::SecondRawMoment);
    }
  }
  return model;
}

void save_model(const ModelGraph& model, const std::filesystem::path& path) {
  write_file(path, encode_model(model));
}

ModelGraph load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

ModelGraph apply_calibration(const ModelGraph& model, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw InvalidArgument(fmt::format("calibration factor must be positive, got {}", factor));
  }
  ModelGraph out = model;
  for (auto& layer : out.layers) {
    auto* w = layer_weights(layer);
    if (!w) continue;
    const SpreadKind kind = w->kind;
    auto scaled = with_spread_kind(*w, SpreadKind::Variance);
    scaled.spread *= factor;
    if (auto* p = std::get_if<ProbabilisticBias>(&scaled.bias)) p->variance *= factor;
    *w = with_spread_kind(scaled, kind);
  }
  out.calibration_factor = model.calibration_factor * factor;
  return out;
}

std::vector<std::uint8_t> encode_tensor(const InputTensor& t) {
  std::vector<std::uint8_t> out(std::begin(kTensorMagic), std::end(kTensorMagic));
  put_u32(out, kTensorFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
  for (auto d : t.shape()) put_u64(out, d);
  put_u32(out, kDtypeFloat32);
  for (Eigen::Index i = 0; i < t.values().size(); ++i) put_f32(out, t.values()[i]);
  return out;
}

InputTensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
    throw BadMagic("tensor file: missing PFPT magic");
  }
  if (bytes.size() < 12) throw LengthMismatch("tensor file: truncated header");
  const auto version = get_u32(bytes.data() + 4);
  if (version != kTensorFormatVersion) {
    throw UnsupportedVersion(fmt::format("tensor file: version {}", version));
  }
  const auto rank = get_u32(bytes.data() + 8);
  std::size_t pos = 12;
  if (rank > 32 || bytes.size() < pos + 8 * std::size_t{rank} + 4) {
    throw LengthMismatch("tensor file: truncated header");
  }
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i, pos += 8) {
    const auto d = get_u64(bytes.data() + pos);
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / d) {
      throw LengthMismatch("tensor file: dimensions overflow");
    }
    count *= d;
    shape.push_back(static_cast<std::size_t>(d));
  }
  const auto dtype = get_u32(bytes.data() + pos);
  pos += 4;
  if (dtype != kDtypeFloat32) throw UnsupportedDtype(fmt::format("tensor file: dtype {}", dtype));
  if (bytes.size() - pos != count * 4) {
    throw LengthMismatch(fmt::format("tensor file: payload has {} bytes, shape {} needs {}",
                                     bytes.size() - pos, shape_string(shape), count * 4));
  }
  Buffer<double> values(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) values[static_cast<Eigen::Index>(i)] = get_f32(bytes.data() + pos + 4 * i);
  return InputTensor(std::move(shape), std::move(values));
}

void save_tensor(const InputTensor& t, const std::filesystem::path& path) {
  write_file(path, encode_tensor(t));
}

InputTensor load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace pfp
