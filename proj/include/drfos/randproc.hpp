#pragma once

// Matérn covariance kernels and Gaussian-process sampling on a time grid.

#include "drfos/fda_core.hpp"
#include "drfos/rng.hpp"

#include <Eigen/Dense>

#include <optional>

namespace drfos::randproc {

/// Matérn kernel parameters. Smoothness must be a half-integer in
/// {1/2, 3/2, 5/2, 7/2}; those orders have closed forms.
struct MaternParams {
  double variance = 1.0;      // eta^2
  double smoothness = 2.5;    // nu
  double length_scale = 0.25; // l

  /// Throws std::invalid_argument on non-positive values or unsupported nu.
  void validate() const;
};

/// C(s,t) for the half-integer Matérn family.
double matern_cov(double s, double t, const MaternParams& p);

struct CovarianceMatrix {
  fda::GridPtr grid;
  Eigen::MatrixXd entries;
};

CovarianceMatrix build_cov_matrix(const fda::GridPtr& grid, const MaternParams& p);

struct LowerTriangularFactor {
  Eigen::MatrixXd lower;
  /// Diagonal loading that made the factorization succeed (0 if none).
  double jitter = 0.0;
  std::size_t dim() const { return static_cast<std::size_t>(lower.rows()); }
};

/// Default starting jitter: 1e-10 * trace / m.
double default_jitter_start(const Eigen::MatrixXd& c);

/// Cholesky factor of `c + delta I`, where delta is the first value of
/// {0, jitter_start * 4^k : k = 0..10} that factorizes with a reconstruction
/// residual below 1e-8 of the largest diagonal entry. Throws NumericalError
/// when the ladder is exhausted.
LowerTriangularFactor factor_psd(const Eigen::MatrixXd& c, double jitter_start);
LowerTriangularFactor factor_psd(const Eigen::MatrixXd& c);

/// mean + L z with z i.i.d. N(0,1) drawn from `rng` (m draws, in order).
fda::Curve sample_gp(const LowerTriangularFactor& factor, const fda::Curve& mean, Rng& rng);
fda::Curve sample_gp(const LowerTriangularFactor& factor, const fda::GridPtr& grid, Rng& rng);

/// `count` zero-mean draws as rows of a count x m matrix, each scaled by
/// `scale`. Row i consumes the same normals a sequential sample_gp call would.
Eigen::MatrixXd sample_gp_rows(const LowerTriangularFactor& factor, std::size_t count, Rng& rng,
                               double scale = 1.0);

}  // namespace drfos::randproc
