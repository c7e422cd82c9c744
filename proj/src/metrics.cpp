#include "pfp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pfp/parallel.hpp"
#include "pfp/random.hpp"

namespace pfp {

namespace {

constexpr std::uint64_t kLogitStreamBase = std::uint64_t{1} << 63;
constexpr double kProbabilityFloor = 1e-300;

void check_labels(const Eigen::Ref<const Eigen::MatrixXd>& probs, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw InvalidArgument(fmt::format("{} labels for {} items", labels.size(), probs.rows()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= probs.cols()) {
      throw InvalidArgument(fmt::format("label {} of item {} outside [0, {})", labels[i], i,
                                        probs.cols()));
    }
  }
}

Eigen::Index argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

double average(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

Eigen::VectorXd ProbSampleSet::mean_row(std::size_t item) const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(classes));
  for (std::size_t s = 0; s < n_samples; ++s) m += row(s, item);
  return m / static_cast<double>(n_samples);
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double shift = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - shift).exp().matrix();
  double total = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i) total += e[i];
  return e / total;
}

ProbSampleSet to_probabilities(const SampleSet& samples, unsigned threads) {
  ProbSampleSet out{samples.n_samples, samples.batch, samples.classes,
                    Buffer<double>(samples.logits.size())};
  const auto c = static_cast<Eigen::Index>(samples.classes);
  const std::size_t rows = samples.n_samples * samples.batch;
  parallel_for(rows, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const auto off = static_cast<Eigen::Index>(r) * c;
      out.probs.segment(off, c) = softmax(samples.logits.segment(off, c).matrix()).array();
    }
  });
  return out;
}

ProbSampleSet logit_sample(const LogitDistribution& d, std::size_t n, std::uint64_t seed,
                           unsigned threads) {
  if (n < 1) throw InvalidArgument("logit_sample: need at least one sample");
  ProbSampleSet out{n, d.batch, d.classes,
                    Buffer<double>(static_cast<Eigen::Index>(n * d.batch * d.classes))};
  parallel_for(d.batch, threads, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd logits(static_cast<Eigen::Index>(d.classes));
    for (std::size_t b = begin; b < end; ++b) {
      NormalStream normal(seed, kLogitStreamBase + b);
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t c = 0; c < d.classes; ++c) {
          const double sigma = std::sqrt(std::max(d.var_at(b, c), 0.0));
          logits[static_cast<Eigen::Index>(c)] = d.mean_at(b, c) + sigma * normal();
        }
        out.probs.segment(static_cast<Eigen::Index>((s * d.batch + b) * d.classes),
                          static_cast<Eigen::Index>(d.classes)) = softmax(logits).array();
      }
    }
  });
  return out;
}

double shannon_entropy(const Eigen::Ref<const Eigen::VectorXd>& probs) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

Decomposition decompose(const ProbSampleSet& s, std::size_t item) {
  Decomposition d;
  d.entropy = shannon_entropy(s.mean_row(item));
  double total = 0.0;
  for (std::size_t k = 0; k < s.n_samples; ++k) total += shannon_entropy(s.row(k, item));
  d.sme = total / static_cast<double>(s.n_samples);
  d.mi_raw = d.entropy - d.sme;
  return d;
}

std::vector<double> sme(const ProbSampleSet& s) {
  std::vector<double> out(s.batch);
  for (std::size_t b = 0; b < s.batch; ++b) out[b] = decompose(s, b).sme;
  return out;
}

namespace {

double floor_mi(double mi) { return mi < kMutualInformationFloor ? 0.0 : mi; }

}  // namespace

std::vector<double> mutual_information(const ProbSampleSet& s) {
  std::vector<double> out(s.batch);
  for (std::size_t b = 0; b < s.batch; ++b) out[b] = floor_mi(decompose(s, b).mi_raw);
  return out;
}

Eigen::MatrixXd mean_probabilities(const ProbSampleSet& s) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(s.batch), static_cast<Eigen::Index>(s.classes));
  for (std::size_t b = 0; b < s.batch; ++b) m.row(static_cast<Eigen::Index>(b)) = s.mean_row(b).transpose();
  return m;
}

double nll(const Eigen::Ref<const Eigen::MatrixXd>& mean_probs, const std::vector<int>& labels) {
  check_labels(mean_probs, labels);
  if (labels.empty()) throw InvalidArgument("nll: empty label set");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = mean_probs(static_cast<Eigen::Index>(i), labels[i]);
    total += std::log(std::max(p, kProbabilityFloor));
  }
  return -total / static_cast<double>(labels.size());
}

double ece(const Eigen::Ref<const Eigen::MatrixXd>& mean_probs, const std::vector<int>& labels,
           std::size_t bins) {
  if (bins < 1) throw InvalidArgument("ece: need at least one bin");
  check_labels(mean_probs, labels);
  if (labels.empty()) throw InvalidArgument("ece: empty label set");
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> hits(bins, 0.0);
  std::vector<std::size_t> counts(bins, 0);
  const double m = static_cast<double>(bins);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = mean_probs.row(static_cast<Eigen::Index>(i));
    const auto pred = argmax(row);
    const double conf = row[pred];
    // Bin k (0-based) covers (k/M, (k+1)/M]; zero confidence lands in bin 0.
    auto k = static_cast<std::ptrdiff_t>(std::ceil(conf * m)) - 1;
    k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    // conf * m may round across an edge; settle against the edges k / M.
    while (k > 0 && conf <= static_cast<double>(k) / m) --k;
    while (k + 1 < static_cast<std::ptrdiff_t>(bins) && conf > static_cast<double>(k + 1) / m) ++k;
    conf_sum[static_cast<std::size_t>(k)] += conf;
    hits[static_cast<std::size_t>(k)] += pred == labels[i] ? 1.0 : 0.0;
    ++counts[static_cast<std::size_t>(k)];
  }
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    if (counts[k] == 0) continue;
    const double c = static_cast<double>(counts[k]);
    total += c / n * std::abs(hits[k] / c - conf_sum[k] / c);
  }
  return total;
}

double accuracy(const Eigen::Ref<const Eigen::MatrixXd>& mean_probs, const std::vector<int>& labels) {
  check_labels(mean_probs, labels);
  if (labels.empty()) throw InvalidArgument("accuracy: empty label set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (argmax(mean_probs.row(static_cast<Eigen::Index>(i))) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double auroc(const std::vector<double>& scores_id, const std::vector<double>& scores_ood) {
  if (scores_id.empty() || scores_ood.empty()) {
    throw InvalidArgument("auroc: both score lists must be non-empty");
  }
  std::vector<double> id = scores_id;
  std::sort(id.begin(), id.end());
  // Twice the Mann-Whitney U statistic, kept integral until the final division.
  std::uint64_t twice_u = 0;
  for (double s : scores_ood) {
    const auto lo = std::lower_bound(id.begin(), id.end(), s);
    const auto hi = std::upper_bound(lo, id.end(), s);
    twice_u += 2 * static_cast<std::uint64_t>(lo - id.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  const double pairs = static_cast<double>(scores_id.size()) * static_cast<double>(scores_ood.size());
  return static_cast<double>(twice_u) / (2.0 * pairs);
}

SplitMetrics split_metrics(std::string name, const ProbSampleSet& s, const std::vector<int>& labels,
                           std::size_t ece_bins) {
  SplitMetrics m;
  m.name = std::move(name);
  m.count = s.batch;
  m.item_entropy.resize(s.batch);
  m.item_mi.resize(s.batch);
  std::vector<double> item_sme(s.batch);
  for (std::size_t b = 0; b < s.batch; ++b) {
    const auto d = decompose(s, b);
    m.item_entropy[b] = d.entropy;
    item_sme[b] = d.sme;
    m.item_mi[b] = floor_mi(d.mi_raw);
  }
  m.mean_entropy = average(m.item_entropy);
  m.mean_sme = average(item_sme);
  m.mean_mi = average(m.item_mi);
  if (!labels.empty()) {
    const auto probs = mean_probabilities(s);
    m.accuracy = accuracy(probs, labels);
    m.nll = nll(probs, labels);
    m.ece = ece(probs, labels, ece_bins);
  }
  return m;
}

ProbSampleSet predict_probabilities(const ModelGraph& model, const InputTensor& input,
                                    const EvalOptions& options) {
  if (options.samples < 2) {
    throw InvalidArgument(fmt::format("at least 2 samples are needed for mutual information, got {}",
                                      options.samples));
  }
  if (options.mode == EvalMode::Pfp) {
    return logit_sample(forward(model, input, options.threads), options.samples, options.seed,
                        options.threads);
  }
  return to_probabilities(mc_predict(model, input, options.samples, options.seed, options.threads),
                          options.threads);
}

MetricsReport evaluate(const ModelGraph& model, const InputTensor& inputs,
                       const std::vector<int>& labels, const EvalOptions& options,
                       const InputTensor* ood_inputs) {
  MetricsReport report;
  report.mode = options.mode == EvalMode::Pfp ? "pfp" : "mc";
  report.samples = options.samples;
  report.seed = options.seed;
  report.ood_score = options.ood_score == OodScore::MutualInformation ? "mi" : "entropy";
  report.id = split_metrics("id", predict_probabilities(model, inputs, options), labels,
                            options.ece_bins);
  if (ood_inputs) {
    report.ood = split_metrics("ood", predict_probabilities(model, *ood_inputs, options), {},
                               options.ece_bins);
    const bool mi = options.ood_score == OodScore::MutualInformation;
    report.auroc = auroc(mi ? report.id.item_mi : report.id.item_entropy,
                         mi ? report.ood->item_mi : report.ood->item_entropy);
  }
  return report;
}

std::string MetricsReport::key_values() const {
  std::string out;
  auto line = [&out](const std::string& key, const std::string& value) {
    out += key + "=" + value + "\n";
  };
  line("mode", mode);
  line("samples", std::to_string(samples));
  line("seed", std::to_string(seed));
  for (const SplitMetrics* s : {&id, ood ? &*ood : nullptr}) {
    if (!s) continue;
    line(s->name + ".count", std::to_string(s->count));
    if (s->accuracy) line(s->name + ".accuracy", num(*s->accuracy));
    line(s->name + ".mean_entropy", num(s->mean_entropy));
    line(s->name + ".mean_sme", num(s->mean_sme));
    line(s->name + ".mean_mi", num(s->mean_mi));
    if (s->nll) line(s->name + ".nll", num(*s->nll));
    if (s->ece) line(s->name + ".ece", num(*s->ece));
  }
  if (auroc) {
    line("ood_score", ood_score);
    line("auroc", num(*auroc));
  }
  return out;
}

std::string MetricsReport::csv() const {
  std::string out = "split,count,accuracy,mean_entropy,mean_sme,mean_mi,nll,ece";
  if (auroc) out += ",auroc";
  out += "\n";
  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  for (const SplitMetrics* s : {&id, ood ? &*ood : nullptr}) {
    if (!s) continue;
    out += fmt::format("{},{},{},{},{},{},{},{}", s->name, s->count, opt(s->accuracy),
                       num(s->mean_entropy), num(s->mean_sme), num(s->mean_mi), opt(s->nll),
                       opt(s->ece));
    if (auroc) out += "," + num(*auroc);
    out += "\n";
  }
  return out;
}

}  // namespace pfp
