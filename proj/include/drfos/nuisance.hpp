#pragma once

// Nuisance estimation: propensity score pi^(1)(x) and arm-wise outcome
// regressions mu^(a)(x), plus the oracle-corruption models used to inject
// controlled misspecification in simulations.

#include "drfos/fda_core.hpp"
#include "drfos/randproc.hpp"
#include "drfos/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace drfos::nuisance {

inline constexpr double kDefaultClip = 0.02;

/// Treatment probabilities pi^(1)_i for an evaluation set, clipped to
/// [clip_bound, 1 - clip_bound]. pi^(0) = 1 - pi^(1).
struct PropensityFit {
  Eigen::VectorXd treated;
  double clip_bound = kDefaultClip;

  double arm(int a, std::size_t i) const {
    const double p = treated[static_cast<Eigen::Index>(i)];
    return a == 1 ? p : 1.0 - p;
  }
  std::size_t size() const { return static_cast<std::size_t>(treated.size()); }
};

/// Clips raw probabilities into [xi, 1 - xi]. xi must lie in (0, 0.5).
PropensityFit make_propensity_fit(Eigen::VectorXd raw, double xi);

/// Predicted outcome curves per unit and arm: row i of `control` is
/// mu^(0)(X_i), row i of `treated` is mu^(1)(X_i).
struct OutcomeFit {
  fda::GridPtr grid;
  Eigen::MatrixXd control;
  Eigen::MatrixXd treated;

  const Eigen::MatrixXd& arm(int a) const { return a == 1 ? treated : control; }
  std::size_t size() const { return static_cast<std::size_t>(control.rows()); }
  void validate() const;
};

// ---------------------------------------------------------------------------
// Logistic regression (IRLS)

struct LogisticOptions {
  int max_iter = 100;
  double tol = 1e-8;
  /// L2 penalty on slope coefficients (intercept unpenalized).
  double ridge = 0.0;
};

struct LogisticFit {
  /// Intercept first, then one slope per covariate column.
  Eigen::VectorXd coefficients;
  bool converged = false;
  int iterations = 0;
};

/// Maximum-likelihood logistic regression by Newton/IRLS with step-halving.
/// `covariates` excludes the intercept column. Throws ValidationError when a
/// treatment arm is empty and NumericalError on a singular weighted design or
/// detected separation.
LogisticFit fit_logistic(const Eigen::MatrixXd& covariates, std::span<const std::uint8_t> treatment,
                         const LogisticOptions& options = {});

/// Mean Bernoulli log-likelihood and its gradient with respect to the
/// coefficients (intercept first). Exposed for diagnostics and tests.
double logistic_loglik(const Eigen::VectorXd& coefficients, const Eigen::MatrixXd& covariates,
                       std::span<const std::uint8_t> treatment);
Eigen::VectorXd logistic_gradient(const Eigen::VectorXd& coefficients, const Eigen::MatrixXd& covariates,
                                  std::span<const std::uint8_t> treatment);

PropensityFit predict_propensity(const Eigen::VectorXd& coefficients, const Eigen::MatrixXd& covariates,
                                 double xi = kDefaultClip);

// ---------------------------------------------------------------------------
// Function-on-scalar OLS

/// Coefficient curves theta_j(t) stored as a q x m matrix (row j = theta_j).
struct FosFit {
  fda::GridPtr grid;
  Eigen::MatrixXd coefficients;
  /// Condition number of X^T X.
  double condition_number = 0.0;
};

/// Pointwise least squares theta(t_j) = (X^T X)^{-1} X^T Y(t_j). `design`
/// includes whatever intercept column the caller wants. One factorization of
/// X^T X serves all grid points. Throws NumericalError when X^T X is
/// numerically rank-deficient (condition number above 1e12).
FosFit fit_fos_ols(const Eigen::MatrixXd& design, const Eigen::MatrixXd& outcomes, const fda::GridPtr& grid);

/// Rows of the returned matrix are mu_i(t) = sum_j x_ij theta_j(t).
Eigen::MatrixXd predict_fos(const FosFit& fit, const Eigen::MatrixXd& design);

/// [1, X].
Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& covariates);

// ---------------------------------------------------------------------------
// Oracle corruption

/// Balanced mixture of N(0.2, 0.1^2) and N(0.8, 0.1^2), truncated to
/// [0.02, 0.98] by rejection.
double sample_truncated_mixture(Rng& rng);

/// alpha * U + (1 - alpha) * true_p with U from the truncated mixture.
double corrupt_propensity(double true_p, double alpha, Rng& rng);
/// Same combination with a caller-supplied U.
double corrupt_propensity_with(double true_p, double alpha, double u);

/// alpha * U + (1 - alpha) * mu, U a zero-mean GP draw through `noise`.
fda::Curve corrupt_outcome(const fda::Curve& true_mu, double alpha, const randproc::LowerTriangularFactor& noise,
                           Rng& rng);
fda::Curve corrupt_outcome(const fda::Curve& true_mu, double alpha, const randproc::MaternParams& noise, Rng& rng);

// ---------------------------------------------------------------------------
// Pluggable learners

enum class PropensityModel { logistic, oracle_corrupted, constant };
enum class OutcomeModel { fos_ols, oracle_corrupted, zero };
/// Feature map applied to covariates before a learner sees them.
enum class FeatureMap { raw, misspecified };

std::string_view to_string(PropensityModel m);
std::string_view to_string(OutcomeModel m);
std::string_view to_string(FeatureMap f);
PropensityModel parse_propensity_model(std::string_view s);
OutcomeModel parse_outcome_model(std::string_view s);
FeatureMap parse_feature_map(std::string_view s);

/// (sin X1, (X2 + X3)^2, log(1 + |X4|)); requires at least 4 columns.
Eigen::MatrixXd misspecified_features(const Eigen::MatrixXd& covariates);
Eigen::MatrixXd apply_feature_map(FeatureMap map, const Eigen::MatrixXd& covariates);

struct NuisanceModelSpec {
  PropensityModel propensity_model = PropensityModel::logistic;
  OutcomeModel outcome_model = OutcomeModel::fos_ols;
  FeatureMap propensity_features = FeatureMap::raw;
  FeatureMap outcome_features = FeatureMap::raw;
  double clip_bound = kDefaultClip;
  double alpha_pi = 0.0;
  double alpha_mu = 0.0;
  LogisticOptions logistic{};

  void validate() const;
};

/// Fit on one set, predict on another.
class PropensityLearner {
 public:
  virtual ~PropensityLearner() = default;
  virtual PropensityFit fit_predict(const fda::ObservationalDataset& train, const Eigen::MatrixXd& eval_covariates,
                                    Rng& rng) const = 0;
};

class OutcomeLearner {
 public:
  virtual ~OutcomeLearner() = default;
  virtual OutcomeFit fit_predict(const fda::ObservationalDataset& train, const Eigen::MatrixXd& eval_covariates,
                                 Rng& rng) const = 0;
};

/// Learners for the data-fitted models. `oracle_corrupted` needs the true
/// nuisances and is only produced by the simulation DGPs, so requesting it
/// here throws ConfigError.
std::unique_ptr<PropensityLearner> make_propensity_learner(const NuisanceModelSpec& spec);
std::unique_ptr<OutcomeLearner> make_outcome_learner(const NuisanceModelSpec& spec);

}  // namespace drfos::nuisance
