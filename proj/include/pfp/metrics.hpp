#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pfp/gaussian_tensor.hpp"
#include "pfp/mc_oracle.hpp"
#include "pfp/model.hpp"

// Uncertainty metrics over sampled class-probability vectors. All entropies
// are in nats.

namespace pfp {

/// Probability rows laid out (sample, item, class).
struct ProbSampleSet {
  std::size_t n_samples = 0;
  std::size_t batch = 0;
  std::size_t classes = 0;
  Buffer<double> probs;

  Eigen::Map<const Eigen::VectorXd> row(std::size_t s, std::size_t item) const {
    return Eigen::Map<const Eigen::VectorXd>(
        probs.data() + (s * batch + item) * classes, static_cast<Eigen::Index>(classes));
  }

  // Average over samples of one item's probability rows.
  Eigen::VectorXd mean_row(std::size_t item) const;
};

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

// Softmax of every sampled logit row.
ProbSampleSet to_probabilities(const SampleSet& samples, unsigned threads = 1);

/// Draws n logit vectors per item from independent per-class Gaussians
/// N(mean, var) and pushes each through softmax. Item b uses the stream
/// keyed (seed, 2^63 + b), so any item partition gives the same result.
ProbSampleSet logit_sample(const LogitDistribution& d, std::size_t n, std::uint64_t seed,
                           unsigned threads = 1);

double shannon_entropy(const Eigen::Ref<const Eigen::VectorXd>& probs);

/// Per-item total entropy H(mean probs), mean sample entropy (SME), and the
/// unclamped difference H - SME.
struct Decomposition {
  double entropy = 0.0;
  double sme = 0.0;
  double mi_raw = 0.0;
};

Decomposition decompose(const ProbSampleSet& s, std::size_t item);

// Per-item SME for every item.
std::vector<double> sme(const ProbSampleSet& s);

// Raw mutual information below this is rounding noise and reported as 0.
inline constexpr double kMutualInformationFloor = 1e-12;

// Per-item mutual information, floored at 0.
std::vector<double> mutual_information(const ProbSampleSet& s);

// Mean over samples, shaped (batch, classes).
Eigen::MatrixXd mean_probabilities(const ProbSampleSet& s);

// Labels are class indices; throws InvalidArgument when out of range.
double nll(const Eigen::Ref<const Eigen::MatrixXd>& mean_probs, const std::vector<int>& labels);
double ece(const Eigen::Ref<const Eigen::MatrixXd>& mean_probs, const std::vector<int>& labels,
           std::size_t bins = 10);
double accuracy(const Eigen::Ref<const Eigen::MatrixXd>& mean_probs, const std::vector<int>& labels);

// Mann-Whitney form: share of (id, ood) pairs with ood > id, ties count 1/2.
double auroc(const std::vector<double>& scores_id, const std::vector<double>& scores_ood);

struct SplitMetrics {
  std::string name;
  std::size_t count = 0;
  std::optional<double> accuracy;  // labeled splits only
  double mean_entropy = 0.0;
  double mean_sme = 0.0;
  double mean_mi = 0.0;
  std::optional<double> nll;
  std::optional<double> ece;
  std::vector<double> item_entropy;
  std::vector<double> item_mi;
};

struct MetricsReport {
  std::string mode;  // "pfp" or "mc"
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::string ood_score;
  SplitMetrics id;
  std::optional<SplitMetrics> ood;
  std::optional<double> auroc;

  // `metric=value` lines.
  std::string key_values() const;
  // Header plus one row per split.
  std::string csv() const;
};

enum class EvalMode { Pfp, MonteCarlo };
enum class OodScore { MutualInformation, Entropy };

struct EvalOptions {
  EvalMode mode = EvalMode::Pfp;
  std::size_t samples = 30;  // logit samples (PFP) or weight samples (MC)
  std::uint64_t seed = 42;
  std::size_t ece_bins = 10;
  OodScore ood_score = OodScore::MutualInformation;
  unsigned threads = 1;
};

// Probability samples for one input batch under the chosen mode.
ProbSampleSet predict_probabilities(const ModelGraph& model, const InputTensor& input,
                                    const EvalOptions& options);

MetricsReport evaluate(const ModelGraph& model, const InputTensor& inputs,
                       const std::vector<int>& labels, const EvalOptions& options,
                       const InputTensor* ood_inputs = nullptr);

// Metrics of an already sampled split; labels may be empty.
SplitMetrics split_metrics(std::string name, const ProbSampleSet& s, const std::vector<int>& labels,
                           std::size_t ece_bins);

}  // namespace pfp
