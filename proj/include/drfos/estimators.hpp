#pragma once

// Functional average treatment effect estimators: outcome regression (OR),
// inverse probability weighting (IPW) and the doubly robust DR-FoS
// estimator, with K-fold cross-fitting.

#include "drfos/fda_core.hpp"
#include "drfos/nuisance.hpp"
#include "drfos/rng.hpp"

#include <Eigen/Dense>

#include <string_view>
#include <vector>

namespace drfos::estimators {

enum class Method { OR, IPW, DRFOS };

std::string_view to_string(Method m);
/// Accepts "or", "ipw", "drfos" (case-insensitive).
Method parse_method(std::string_view s);

struct FateEstimate {
  fda::Curve beta_hat;
  Method method = Method::DRFOS;
  std::size_t n_used = 0;
  std::size_t folds = 1;
};

/// values(i, j) = phi_hat(D_i; t_j).
struct InfluenceMatrix {
  fda::GridPtr grid;
  Eigen::MatrixXd values;
  bool centered = false;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
};

/// Zero-based fold index per unit.
struct FoldAssignment {
  std::vector<std::size_t> fold;
  std::size_t folds = 0;

  std::vector<std::vector<std::size_t>> members() const;
};

/// beta_OR(t) = mean_i [mu1_i(t) - mu0_i(t)].
FateEstimate estimate_or(const nuisance::OutcomeFit& outcome);

/// beta_IPW(t) = mean_i [A_i Y_i(t) / pi_i - (1 - A_i) Y_i(t) / (1 - pi_i)].
FateEstimate estimate_ipw(const fda::ObservationalDataset& data, const nuisance::PropensityFit& propensity);

/// gamma^(a)(D_i) = mu^(a)_i + 1{A_i = a} (Y_i - mu^(a)_i) / pi^(a)_i, one
/// row per unit.
Eigen::MatrixXd case_corrected(const fda::ObservationalDataset& data, const nuisance::OutcomeFit& outcome,
                               const nuisance::PropensityFit& propensity, int arm);

struct DrFosResult {
  FateEstimate estimate;
  InfluenceMatrix influence;
};

/// One-step estimator on an evaluation set whose nuisances were fitted
/// elsewhere: beta = mean(gamma1 - gamma0); influence rows are
/// gamma1_i - gamma0_i - beta.
DrFosResult estimate_drfos_onefold(const fda::ObservationalDataset& data, const nuisance::OutcomeFit& outcome,
                                   const nuisance::PropensityFit& propensity);

/// Uniformly random partition of n units into J folds; the first n mod J
/// folds receive one extra unit. Requires 2 <= J <= n.
FoldAssignment make_folds(std::size_t n, std::size_t folds, Rng& rng);

struct CrossfitResult {
  FateEstimate estimate;
  /// Rows from each unit's own fold-excluded nuisances, centered by the
  /// global cross-fit estimate.
  InfluenceMatrix influence;
  FoldAssignment assignment;
  std::vector<fda::Curve> fold_estimates;
  /// Out-of-fold nuisance predictions for every unit.
  nuisance::OutcomeFit outcome;
  nuisance::PropensityFit propensity;
};

/// Fits nuisances on each fold's complement, evaluates DR-FoS on the fold,
/// and averages fold estimates with equal weights. Fold j's learners draw
/// from `rng.derive(j + 1)` and the partition from
/// `rng.derive(streams::kFolds)`, so results do not depend on `jobs`.
CrossfitResult estimate_drfos_crossfit(const fda::ObservationalDataset& data,
                                       const nuisance::PropensityLearner& propensity,
                                       const nuisance::OutcomeLearner& outcome, std::size_t folds, const Rng& rng,
                                       std::size_t jobs = 1);
CrossfitResult estimate_drfos_crossfit(const fda::ObservationalDataset& data, const nuisance::NuisanceModelSpec& spec,
                                       std::size_t folds, const Rng& rng, std::size_t jobs = 1);

}  // namespace drfos::estimators
