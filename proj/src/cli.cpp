#include "pfp/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pfp/bench.hpp"
#include "pfp/error.hpp"
#include "pfp/metrics.hpp"
#include "pfp/model_format.hpp"
#include "pfp/reference.hpp"

namespace pfp {

namespace {

struct RunConfig {
  std::string model;
  std::string input;
  std::string labels;
  std::string ood;
  std::string out;
  std::string mode = "pfp";
  std::string ood_score = "mi";
  std::size_t samples = 30;
  std::size_t validate_samples = 10000;
  std::size_t logit_samples = 100;
  std::uint64_t seed = 42;
  std::optional<double> calibration;
  std::size_t ece_bins = 10;
  unsigned threads = 1;
  std::size_t iterations = 30;
  std::size_t warmup = 3;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

std::string num(double v) { return fmt::format("{}", v); }

// Model with the requested effective calibration factor.
ModelGraph load_configured_model(const RunConfig& cfg) {
  auto model = load_model(cfg.model);
  if (cfg.calibration) {
    if (!(*cfg.calibration > 0.0)) throw UsageError("--calibration must be positive");
    model = apply_calibration(model, *cfg.calibration / model.calibration_factor);
  }
  return model;
}

std::vector<int> load_labels(const std::string& path, std::size_t expected) {
  const auto t = load_tensor(path);
  if (t.size() != expected) {
    throw UsageError(fmt::format("{} labels for {} items", t.size(), expected));
  }
  std::vector<int> labels(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = t.values()[static_cast<Eigen::Index>(i)];
    if (v != std::floor(v) || v < 0.0 || v > 1e9) {
      throw UsageError(fmt::format("label {} of item {} is not a class index", v, i));
    }
    labels[i] = static_cast<int>(v);
  }
  return labels;
}

// Writes to --out when given, otherwise to the report stream.
void emit(const RunConfig& cfg, std::ostream& out, const std::string& text) {
  if (cfg.out.empty()) {
    out << text;
    return;
  }
  std::ofstream file(cfg.out, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + cfg.out);
  file << text;
}

int cmd_infer(const RunConfig& cfg, std::ostream& out) {
  const auto model = load_configured_model(cfg);
  const auto input = load_tensor(cfg.input);
  const auto logits = forward(model, input, cfg.threads);
  std::string text = "item";
  for (std::size_t c = 0; c < logits.classes; ++c) text += fmt::format(",mean_{}", c);
  for (std::size_t c = 0; c < logits.classes; ++c) text += fmt::format(",var_{}", c);
  text += "\n";
  for (std::size_t b = 0; b < logits.batch; ++b) {
    text += std::to_string(b);
    for (std::size_t c = 0; c < logits.classes; ++c) text += "," + num(logits.mean_at(b, c));
    for (std::size_t c = 0; c < logits.classes; ++c) text += "," + num(logits.var_at(b, c));
    text += "\n";
  }
  emit(cfg, out, text);
  return kExitOk;
}

int cmd_validate(const RunConfig& cfg, std::ostream& out) {
  if (cfg.validate_samples < 100) {
    throw UsageError(fmt::format("validate needs --samples >= 100, got {}", cfg.validate_samples));
  }
  const auto model = load_configured_model(cfg);
  const auto input = load_tensor(cfg.input);
  const auto report = validate_against_sampling(model, input, cfg.validate_samples, cfg.seed, cfg.threads);
  emit(cfg, out, report.text());
  return report.pass ? kExitOk : kExitThreshold;
}

int cmd_metrics(const RunConfig& cfg, std::ostream& out) {
  EvalOptions opt;
  if (cfg.mode == "pfp") {
    opt.mode = EvalMode::Pfp;
    opt.samples = cfg.logit_samples;
  } else if (cfg.mode == "mc") {
    opt.mode = EvalMode::MonteCarlo;
    opt.samples = cfg.samples;
  } else {
    throw UsageError("--mode must be pfp or mc");
  }
  if (opt.samples < 2) {
    throw UsageError(fmt::format("{} must be at least 2", cfg.mode == "pfp" ? "--logit-samples" : "--samples"));
  }
  if (cfg.ece_bins < 1) throw UsageError("--ece-bins must be at least 1");
  opt.seed = cfg.seed;
  opt.ece_bins = cfg.ece_bins;
  opt.threads = cfg.threads;
  if (cfg.ood_score == "mi") {
    opt.ood_score = OodScore::MutualInformation;
  } else if (cfg.ood_score == "entropy") {
    opt.ood_score = OodScore::Entropy;
  } else {
    throw UsageError("--ood-score must be mi or entropy");
  }
  if (cfg.labels.empty()) throw UsageError("metrics needs --labels");

  const auto model = load_configured_model(cfg);
  const auto input = load_tensor(cfg.input);
  const auto labels = load_labels(cfg.labels, input.batch());
  std::optional<InputTensor> ood;
  if (!cfg.ood.empty()) ood = load_tensor(cfg.ood);
  const auto report = evaluate(model, input, labels, opt, ood ? &*ood : nullptr);

  if (!cfg.out.empty()) {
    RunConfig csv = cfg;
    csv.out = cfg.out + ".csv";
    emit(csv, out, report.csv());
    RunConfig kv = cfg;
    kv.out = cfg.out + ".txt";
    emit(kv, out, report.key_values());
  }
  out << report.key_values();
  return kExitOk;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
  if (cfg.samples < 1) throw UsageError("--samples must be at least 1");
  if (cfg.iterations < 1) throw UsageError("--iterations must be at least 1");
  const auto model = load_configured_model(cfg);
  const auto input = load_tensor(cfg.input);
  const auto net = mean_network(model);

  const auto det = measure_latency([&] { point_forward(net, input); }, cfg.warmup, cfg.iterations);
  const auto pfp = measure_latency([&] { forward(model, input, cfg.threads); }, cfg.warmup,
                                   cfg.iterations);
  const auto mc = measure_latency([&] { mc_predict(model, input, cfg.samples, cfg.seed, cfg.threads); },
                                  cfg.warmup, cfg.iterations);

  std::string text = "method,batch,samples,warmup,iterations,median_ms,mean_ms,speedup\n";
  auto row = [&](const std::string& name, std::size_t samples, const LatencyStats& s) {
    text += fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.3f}\n", name, input.batch(), samples,
                        cfg.warmup, s.iterations, s.median_ms, s.mean_ms, mc.median_ms / s.median_ms);
  };
  row("deterministic", 1, det);
  row("pfp", 1, pfp);
  row("mc", cfg.samples, mc);
  emit(cfg, out, text);
  return kExitOk;
}

int cmd_calibrate(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.calibration) throw UsageError("calibrate needs --calibration");
  if (!(*cfg.calibration > 0.0)) throw UsageError("--calibration must be positive");
  if (cfg.out.empty()) throw UsageError("calibrate needs --out");
  const auto model = apply_calibration(load_model(cfg.model), *cfg.calibration);
  save_model(model, cfg.out);
  out << fmt::format("calibration_factor={}\n", model.calibration_factor);
  return kExitOk;
}

}  // namespace

ValidationReport validate_against_sampling(const ModelGraph& model, const InputTensor& input,
                                           std::size_t samples, std::uint64_t seed,
                                           unsigned threads) {
  const auto pfp = forward(model, input, threads);
  const auto mc = empirical_moments(mc_predict(model, input, samples, seed, threads));
  ValidationReport r;
  r.linear = is_linear(model);
  r.samples = samples;
  r.batch = pfp.batch;
  r.classes = pfp.classes;
  const std::size_t n = pfp.batch * pfp.classes;
  auto z_score = [](double expected, double observed, double se) {
    const double diff = expected - observed;
    if (se > 0.0) return diff / se;
    return std::abs(diff) <= 1e-9 * std::max(1.0, std::abs(expected)) ? 0.0 : HUGE_VAL;
  };
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    r.pfp_mean.push_back(pfp.mean[i]);
    r.mc_mean.push_back(mc.mean[i]);
    r.z_mean.push_back(z_score(pfp.mean[i], mc.mean[i], mc.mean_standard_error(k)));
    r.pfp_var.push_back(pfp.var[i]);
    r.mc_var.push_back(mc.var[i]);
    r.z_var.push_back(z_score(pfp.var[i], mc.var[i], mc.var_standard_error(k)));
    r.var_ratio.push_back(mc.var[i] > 0.0 ? pfp.var[i] / mc.var[i] : (pfp.var[i] > 0.0 ? HUGE_VAL : 1.0));
    r.max_abs_z_mean = std::max(r.max_abs_z_mean, std::abs(r.z_mean.back()));
    r.max_abs_z_var = std::max(r.max_abs_z_var, std::abs(r.z_var.back()));
  }
  r.pass = r.linear ? (r.max_abs_z_mean <= kLinearZBound && r.max_abs_z_var <= kLinearZBound)
                    : r.max_abs_z_mean <= kNonlinearMeanZBound;
  return r;
}

std::string ValidationReport::text() const {
  std::string t;
  t += fmt::format("linear={}\n", linear ? "true" : "false");
  t += fmt::format("samples={}\n", samples);
  t += fmt::format("max_abs_z_mean={}\n", max_abs_z_mean);
  t += fmt::format("max_abs_z_var={}\n", max_abs_z_var);
  t += fmt::format("mean_z_bound={}\n", linear ? kLinearZBound : kNonlinearMeanZBound);
  t += fmt::format("var_z_bound={}\n", linear ? fmt::format("{}", kLinearZBound) : std::string("none"));
  t += fmt::format("result={}\n", pass ? "pass" : "fail");
  t += "item,class,pfp_mean,mc_mean,z_mean,pfp_var,mc_var,var_ratio,z_var\n";
  for (std::size_t k = 0; k < pfp_mean.size(); ++k) {
    t += fmt::format("{},{},{},{},{},{},{},{},{}\n", k / classes, k % classes, pfp_mean[k],
                     mc_mean[k], z_mean[k], pfp_var[k], mc_var[k], var_ratio[k], z_var[k]);
  }
  return t;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probabilistic forward pass inference for Gaussian-weight networks", "pfp-cli"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_model = [&](CLI::App* sub) { sub->add_option("--model", cfg.model, "Model file")->required(); };
  auto add_input = [&](CLI::App* sub) { sub->add_option("--input", cfg.input, "Input tensor file")->required(); };
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    sub->add_option("--threads", cfg.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--calibration", cfg.calibration, "Effective variance calibration factor");
    sub->add_option("--out", cfg.out, "Output path");
  };

  auto* infer = app.add_subcommand("infer", "Per-class logit means and variances (CSV)");
  add_model(infer);
  add_input(infer);
  add_common(infer);

  auto* validate = app.add_subcommand("validate", "Compare PFP moments against weight sampling");
  add_model(validate);
  add_input(validate);
  add_common(validate);
  validate->add_option("--samples", cfg.validate_samples, "Monte-Carlo samples (>= 100)")->capture_default_str();

  auto* metrics = app.add_subcommand("metrics", "Uncertainty metrics over a labeled set");
  add_model(metrics);
  add_input(metrics);
  add_common(metrics);
  metrics->add_option("--labels", cfg.labels, "Label tensor file (class indices)");
  metrics->add_option("--ood", cfg.ood, "Out-of-distribution input tensor file");
  metrics->add_option("--mode", cfg.mode, "pfp or mc")->capture_default_str();
  metrics->add_option("--samples", cfg.samples, "Weight samples in mc mode")->capture_default_str();
  metrics->add_option("--logit-samples", cfg.logit_samples, "Logit samples in pfp mode")->capture_default_str();
  metrics->add_option("--ece-bins", cfg.ece_bins, "Equal-width ECE bins")->capture_default_str();
  metrics->add_option("--ood-score", cfg.ood_score, "mi or entropy")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Latency of PFP versus sampling");
  add_model(bench);
  add_input(bench);
  add_common(bench);
  bench->add_option("--samples", cfg.samples, "Monte-Carlo samples")->capture_default_str();
  bench->add_option("--iterations", cfg.iterations, "Timed iterations")->capture_default_str()->check(CLI::Range(30, 1000000));
  bench->add_option("--warmup", cfg.warmup, "Warm-up iterations")->capture_default_str()->check(CLI::Range(3, 1000000));

  auto* calibrate = app.add_subcommand("calibrate", "Scale all weight variances and write a new model");
  add_model(calibrate);
  add_common(calibrate);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*infer) return cmd_infer(cfg, out);
    if (*validate) return cmd_validate(cfg, out);
    if (*metrics) return cmd_metrics(cfg, out);
    if (*bench) return cmd_bench(cfg, out);
    if (*calibrate) return cmd_calibrate(cfg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace pfp
