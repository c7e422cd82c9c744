#pragma once

#include <cmath>
#include <numbers>

#include "pfp/gaussian_tensor.hpp"

// Scalar moment kernels shared by the tensor operators. All functions are
// templated on the floating-point type and are pure.

namespace pfp {

// Standard normal pdf.
template <typename Scalar>
Scalar normal_pdf(Scalar x) {
  return std::exp(Scalar(-0.5) * x * x) *
         Scalar(1.0 / std::sqrt(2.0 * std::numbers::pi));
}

// Standard normal cdf through the C library's erfc, which keeps relative
// accuracy deep in the lower tail where 1 + erf(z) cancels.
template <typename Scalar>
Scalar normal_cdf(Scalar x) {
  return Scalar(0.5) * std::erfc(-x * Scalar(std::numbers::sqrt2 / 2.0));
}

template <typename Scalar>
struct MeanSrm {
  Scalar mean;
  Scalar srm;
};

template <typename Scalar>
struct MeanVar {
  Scalar mean;
  Scalar var;
};

/// First and second raw moment of relu(a) for a ~ N(mean, var).
///
/// With alpha = mean / sigma:
///   E[relu]   = mean * Phi(alpha) + sigma * phi(alpha)
///   E[relu^2] = (mean^2 + var) * Phi(alpha) + mean * sigma * phi(alpha)
/// which is the erf form with (1 + erf(mean / sqrt(2 var))) / 2 = Phi(alpha).
/// Below kActivationEpsilon the deterministic limit max(mean, 0) is used.
template <typename Scalar>
MeanSrm<Scalar> relu_moments(Scalar mean, Scalar var) {
  if (var < Scalar(kActivationEpsilon)) {
    const Scalar m = mean > Scalar(0) ? mean : Scalar(0);
    return {m, m * m};
  }
  const Scalar sigma = std::sqrt(var);
  const Scalar alpha = mean / sigma;
  const Scalar cdf = normal_cdf(alpha);
  const Scalar pdf_term = sigma * normal_pdf(alpha);
  return {mean * cdf + pdf_term, (mean * mean + var) * cdf + mean * pdf_term};
}

/// Moments of max(x1, x2) for independent x1 ~ N(m1, v1), x2 ~ N(m2, v2)
/// (Clark's formulas). These are exact for the pair; the result is then
/// re-read as a Gaussian by the caller.
///
/// When the combined spread a = sqrt(v1 + v2) is below kActivationEpsilon
/// the larger-mean operand is returned unchanged (ties keep the first).
template <typename Scalar>
MeanVar<Scalar> gaussian_max_moments(Scalar m1, Scalar v1, Scalar m2, Scalar v2) {
  const Scalar a = std::sqrt(v1 + v2);
  if (a < Scalar(kActivationEpsilon)) {
    return m2 > m1 ? MeanVar<Scalar>{m2, v2} : MeanVar<Scalar>{m1, v1};
  }
  const Scalar alpha = (m1 - m2) / a;
  const Scalar cdf = normal_cdf(alpha);
  const Scalar cdf_neg = normal_cdf(-alpha);
  const Scalar pdf_term = a * normal_pdf(alpha);
  const Scalar first = m1 * cdf + m2 * cdf_neg + pdf_term;
  const Scalar second =
      (m1 * m1 + v1) * cdf + (m2 * m2 + v2) * cdf_neg + (m1 + m2) * pdf_term;
  Scalar var = second - first * first;
  if (var < Scalar(0)) var = Scalar(0);
  return {first, var};
}

// Per-term contributions to the variance of sum_j w_j x_j under independence.
// The three algebraically equal forms are kept separately so they can be
// cross-checked; dense/conv kernels use the raw-moment form.

// E[w^2] E[x^2] - mu_w^2 mu_x^2. With zero spreads the two products are
// bitwise equal, so deterministic terms cancel exactly.
template <typename Scalar>
Scalar product_variance_raw(Scalar w_mean, Scalar w_srm, Scalar x_mean, Scalar x_srm) {
  return w_srm * x_srm - (w_mean * w_mean) * (x_mean * x_mean);
}

// var_w E[x^2] + mu_w^2 (E[x^2] - mu_x^2)
template <typename Scalar>
Scalar product_variance_mixed(Scalar w_mean, Scalar w_var, Scalar x_mean, Scalar x_srm) {
  return w_var * x_srm + w_mean * w_mean * (x_srm - x_mean * x_mean);
}

// var_w mu_x^2 + mu_w^2 var_x + var_w var_x
template <typename Scalar>
Scalar product_variance_mean_var(Scalar w_mean, Scalar w_var, Scalar x_mean, Scalar x_var) {
  return w_var * x_mean * x_mean + w_mean * w_mean * x_var + w_var * x_var;
}

}  // namespace pfp
