#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pfp/mc_oracle.hpp"
#include "pfp/model.hpp"

namespace pfp {

// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitThreshold = 3;

// Runs the command line `args` (without the program name). Reports go to
// `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// PFP-versus-sampling comparison for one input batch.
struct ValidationReport {
  bool linear = false;
  std::size_t samples = 0;
  std::size_t batch = 0;
  std::size_t classes = 0;
  std::vector<double> pfp_mean, mc_mean, z_mean;
  std::vector<double> pfp_var, mc_var, z_var, var_ratio;
  double max_abs_z_mean = 0.0;
  double max_abs_z_var = 0.0;
  bool pass = false;

  std::string text() const;
};

// Linear chains must satisfy |z| <= 4 for every logit mean and variance.
// Chains with nonlinearities are held to |z_mean| <= 5; their variances are
// reported but not gated.
inline constexpr double kLinearZBound = 4.0;
inline constexpr double kNonlinearMeanZBound = 5.0;

ValidationReport validate_against_sampling(const ModelGraph& model, const InputTensor& input,
                                           std::size_t samples, std::uint64_t seed,
                                           unsigned threads = 1);

}  // namespace pfp
