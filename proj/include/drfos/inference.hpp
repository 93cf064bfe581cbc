#pragma once

// Covariance of the influence process and simultaneous confidence bands
// calibrated by a parametric bootstrap of the sup-t statistic.

#include "drfos/estimators.hpp"
#include "drfos/fda_core.hpp"
#include "drfos/randproc.hpp"
#include "drfos/rng.hpp"

#include <Eigen/Dense>

namespace drfos::inference {

inline constexpr std::size_t kDefaultDraws = 2000;
inline constexpr double kDefaultLevel = 0.95;
/// Relative floor applied to sigma_hat(t) before standardizing.
inline constexpr double kSigmaFloor = 1e-12;

struct CovEstimate {
  randproc::CovarianceMatrix sigma;
  std::size_t n = 0;

  /// sqrt of the diagonal, floored at kSigmaFloor * max.
  Eigen::VectorXd pointwise_sd() const;
};

/// Sigma_hat(s,t) = (1/n) sum_i phi_i(s) phi_i(t).
CovEstimate estimate_sigma(const estimators::InfluenceMatrix& influence);

struct ConfidenceBand {
  fda::Curve lower;
  fda::Curve upper;
  double level = kDefaultLevel;
  /// Multiplier q; half-width is q sigma_hat(t) / sqrt(n).
  double calibration = 0.0;
  std::size_t draws = 0;
};

/// Bootstrap quantile of max_t |Z(t)| / sigma_hat(t), Z ~ N(0, Sigma_hat).
/// Draw b uses `rng.derive(b)`, so the result is independent of `jobs`.
double supt_quantile(const CovEstimate& sigma, double level, std::size_t draws, const Rng& rng,
                     std::size_t jobs = 1);

/// beta_hat +- q sigma_hat / sqrt(n) with q from supt_quantile.
/// Requires draws >= 100 and level in (0,1).
ConfidenceBand supt_band(const fda::Curve& beta_hat, const CovEstimate& sigma, double level, std::size_t draws,
                         const Rng& rng, std::size_t jobs = 1);

/// beta_hat(t) +- z_{1-alpha/2} sigma_hat(t) / sqrt(n). Diagnostics only:
/// no simultaneous guarantee.
ConfidenceBand pointwise_band(const fda::Curve& beta_hat, const CovEstimate& sigma, double level);

/// Trapezoid-weighted fraction of the domain where truth lies in the band.
double coverage_delta(const fda::Curve& truth, const ConfidenceBand& band);

/// Fraction of the domain where the band excludes zero.
double exclusion_fraction(const ConfidenceBand& band);

/// sqrt(n) max_t |beta_hat(t) - truth(t)| / sigma_hat(t); the truth is fully
/// covered by the sup-t band iff this is <= q.
double supt_statistic(const fda::Curve& beta_hat, const fda::Curve& truth, const CovEstimate& sigma);

}  // namespace drfos::inference
