#pragma once

// Simulation lab: data-generating processes with controlled nuisance
// misspecification, per-replicate metrics, and a deterministic parallel
// runner over scenario grids.

#include "drfos/estimators.hpp"
#include "drfos/fda_core.hpp"
#include "drfos/inference.hpp"
#include "drfos/nuisance.hpp"
#include "drfos/randproc.hpp"
#include "drfos/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace drfos::simlab {

// ---------------------------------------------------------------------------
// Matérn DGP: mu^(a) = a beta + rho, Y^(a)_i = mu^(a) + eps_i, A_i ~ Ber(p).

enum class NoiseRule {
  /// eta^2 = pooled Var(A beta + rho) / 10
  supplement_ratio,
  /// eta^2 taken from MaternDgpConfig::noise_variance
  explicit_variance,
};

struct MaternDgpConfig {
  std::size_t n = 2000;
  std::size_t grid_points = 100;
  randproc::MaternParams signal{1.0, 3.5, 0.25};
  /// Smoothness and length scale of the error curves; the variance comes from
  /// the noise rule.
  randproc::MaternParams noise{1.0, 2.5, 0.25};
  NoiseRule noise_rule = NoiseRule::supplement_ratio;
  double noise_variance = 0.1;
  double treat_prob = 0.5;
  double alpha_pi = 0.0;
  double alpha_mu = 0.0;
  /// Kernel of the random curves that corrupt mu_hat.
  randproc::MaternParams corruption{1.0, 2.5, 0.25};
  /// Draw beta and rho from each replicate's seed; otherwise from signal_seed.
  bool redraw_signal = true;
  std::uint64_t signal_seed = 0;
  bool keep_potential_outcomes = false;

  void validate() const;
};

struct MaternTruth {
  fda::Curve beta;
  fda::Curve rho;
  fda::Curve mu0;
  fda::Curve mu1;
  double true_propensity = 0.5;
  double noise_variance = 0.0;
  /// n x m potential outcomes when requested.
  std::optional<Eigen::MatrixXd> y0;
  std::optional<Eigen::MatrixXd> y1;
};

struct MaternDraw {
  fda::ObservationalDataset data;
  MaternTruth truth;
  /// Oracle-corrupted nuisances for every unit.
  nuisance::PropensityFit propensity;
  nuisance::OutcomeFit outcome;
};

/// Cached Cholesky factors (unit variance) for one grid and kernel set.
struct MaternFactors {
  fda::GridPtr grid;
  randproc::LowerTriangularFactor signal;
  randproc::LowerTriangularFactor noise;
  randproc::LowerTriangularFactor corruption;

  static MaternFactors build(const MaternDgpConfig& cfg);
};

/// p (1 - p) times the trapezoid average of beta(t)^2 (rho is a fixed curve
/// within a replicate, so it contributes no cross-sectional variance),
/// divided by 10. Throws NumericalError when the signal variance is zero.
double supplement_noise_variance(const fda::Curve& beta, double treat_prob);

MaternDraw gen_matern_dgp(const MaternDgpConfig& cfg, const Rng& rng);
MaternDraw gen_matern_dgp(const MaternDgpConfig& cfg, const MaternFactors& factors, const Rng& rng);

// ---------------------------------------------------------------------------
// Linear function-on-scalar DGP with logistic confounding.

struct LinearDgpConfig {
  std::size_t n = 1000;
  std::size_t grid_points = 100;
  std::size_t p = 5;
  randproc::MaternParams coefficient{1.0, 3.5, 0.25};
  /// Constant treatment shift D.
  double shift = 1.0;
  double logit_noise_sd = 1.0;
  /// Pointwise N(0, sd^2) outcome noise; 0 gives noiseless outcomes.
  double outcome_noise_sd = 1.0;
  /// Seed of the propensity coefficients, drawn once per scenario.
  std::uint64_t scenario_seed = 0;
  /// Draw theta curves from each replicate's seed; otherwise from scenario_seed.
  bool redraw_coefficients = true;

  void validate() const;
};

struct LinearTruth {
  /// Population FATE; with centered covariates this is the shift D.
  fda::Curve beta;
  Eigen::VectorXd propensity_coefficients;
  /// p x m coefficient curves per arm.
  Eigen::MatrixXd theta0;
  Eigen::MatrixXd theta1;
  Eigen::VectorXd true_propensity;
};

struct LinearDraw {
  fda::ObservationalDataset data;
  LinearTruth truth;
};

LinearDraw gen_linear_dgp(const LinearDgpConfig& cfg, const Rng& rng);

// ---------------------------------------------------------------------------
// Scenarios and replicates

enum class DgpKind { matern, linear };
/// Which nuisance models see the misspecified feature map (linear DGP).
enum class Misspecification { none, propensity, outcome, both };

std::string_view to_string(DgpKind k);
std::string_view to_string(Misspecification m);
DgpKind parse_dgp_kind(std::string_view s);
Misspecification parse_misspecification(std::string_view s);

struct Scenario {
  std::string id;
  DgpKind dgp = DgpKind::matern;
  MaternDgpConfig matern{};
  LinearDgpConfig linear{};
  Misspecification misspecification = Misspecification::none;
  /// Learners for the linear DGP. Matérn scenarios inject corrupted oracle
  /// nuisances directly and do not cross-fit.
  nuisance::NuisanceModelSpec nuisance{};
  std::size_t folds = 5;
  double level = inference::kDefaultLevel;
  /// Bootstrap draws for the DR-FoS band; 0 disables bands.
  std::size_t draws = inference::kDefaultDraws;
  std::vector<estimators::Method> estimators{estimators::Method::OR, estimators::Method::IPW,
                                             estimators::Method::DRFOS};
  bool keep_curves = false;
  bool timing = false;

  std::size_t n() const { return dgp == DgpKind::matern ? matern.n : linear.n; }
  std::size_t grid_points() const { return dgp == DgpKind::matern ? matern.grid_points : linear.grid_points; }
  double alpha_pi() const { return dgp == DgpKind::matern ? matern.alpha_pi : 0.0; }
  double alpha_mu() const { return dgp == DgpKind::matern ? matern.alpha_mu : 0.0; }
  /// Nuisance spec with feature maps set from `misspecification`.
  nuisance::NuisanceModelSpec effective_nuisance() const;
  void validate() const;
};

struct EstimatorOutcome {
  estimators::Method method = estimators::Method::DRFOS;
  double mse = 0.0;
  std::optional<double> delta;
  std::optional<bool> simul_covered;
  std::optional<double> q;
  /// sigma_hat(t) for estimators with an influence-function band.
  std::optional<Eigen::VectorXd> pointwise_sd;
  std::optional<fda::Curve> beta_hat;
  std::optional<inference::ConfidenceBand> band;
};

struct ReplicateResult {
  std::string scenario_id;
  std::uint64_t seed = 0;
  double alpha_pi = 0.0;
  double alpha_mu = 0.0;
  std::size_t n = 0;
  std::vector<EstimatorOutcome> estimates;
  fda::Curve truth;
  /// Wall time; recorded only when Scenario::timing is set.
  std::optional<double> runtime_ms;

  const EstimatorOutcome* find(estimators::Method m) const;
};

/// Prepares per-scenario caches (GP factors) once and runs replicates.
class ScenarioRunner {
 public:
  explicit ScenarioRunner(Scenario scenario);

  const Scenario& scenario() const { return scenario_; }
  /// All randomness flows from Rng(seed).
  ReplicateResult run(std::uint64_t seed) const;

 private:
  ReplicateResult run_matern(std::uint64_t seed) const;
  ReplicateResult run_linear(std::uint64_t seed) const;

  Scenario scenario_;
  std::optional<MaternFactors> factors_;
};

ReplicateResult run_replicate(const Scenario& scenario, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Scenario grids

enum class GridLayout {
  /// every (alpha_pi, alpha_mu) pair
  cartesian,
  /// (a, 0) for a in alpha_pi and (0, b) for b in alpha_mu
  slices,
};

std::string_view to_string(GridLayout l);
GridLayout parse_grid_layout(std::string_view s);

struct GridSpec {
  Scenario base{};
  std::vector<double> alpha_pi{0.0};
  std::vector<double> alpha_mu{0.0};
  GridLayout layout = GridLayout::cartesian;
  std::vector<Misspecification> misspecifications{Misspecification::none};
  std::uint64_t seed = 1;
  std::size_t replicates = 30;

  /// Cells in deterministic order with generated ids.
  std::vector<Scenario> cells() const;
  /// seed, seed + 1, ..., seed + replicates - 1.
  std::vector<std::uint64_t> seeds() const;
  void validate() const;
};

struct ReplicateFailure {
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::string message;
};

struct CellSummary {
  std::string scenario_id;
  double alpha_pi = 0.0;
  double alpha_mu = 0.0;
  std::size_t n = 0;
  Misspecification misspecification = Misspecification::none;
  estimators::Method method = estimators::Method::DRFOS;
  std::size_t replicates = 0;
  std::size_t failures = 0;
  double mean_mse = 0.0;
  double median_mse = 0.0;
  /// Monte Carlo standard error of mean_mse.
  double mse_se = 0.0;
  std::optional<double> mean_delta;
  /// Fraction of replicates whose band covers the truth everywhere.
  std::optional<double> coverage;
};

struct ResultsTable {
  std::vector<Scenario> cells;
  /// Ordered by (cell, seed) regardless of completion order.
  std::vector<ReplicateResult> rows;
  std::vector<ReplicateFailure> failures;
  std::vector<CellSummary> summary;
};

std::vector<CellSummary> summarize(const std::vector<Scenario>& cells, const std::vector<ReplicateResult>& rows,
                                   const std::vector<ReplicateFailure>& failures);

/// Runs every (cell, seed) task on up to `jobs` threads. A failing replicate
/// is recorded in `failures` and the run continues.
ResultsTable run_scenario_grid(const GridSpec& spec, std::size_t jobs = 1);

// ---------------------------------------------------------------------------
// Output formats

/// Header of the per-replicate results CSV.
inline constexpr const char* kResultsHeader =
    "scenario_id,alpha_pi,alpha_mu,n,seed,estimator,mse,delta,simul_covered,q,runtime_ms";
inline constexpr const char* kSummaryHeader =
    "scenario_id,alpha_pi,alpha_mu,n,misspecification,estimator,replicates,failures,mean_mse,median_mse,mse_se,"
    "mean_delta,coverage";

/// 12 significant digits, shortest form.
std::string format_number(double v);
/// v rounded to 12 significant digits.
double round12(double v);

void write_results_csv(std::ostream& out, const ResultsTable& table);
void write_summary_csv(std::ostream& out, const ResultsTable& table);
/// JSON curve dump {scenario_id, seed, grid, beta, estimates:{METHOD: curve},
/// band:{lower, upper, level, q}}.
std::string curve_dump_json(const ReplicateResult& row);

}  // namespace drfos::simlab
