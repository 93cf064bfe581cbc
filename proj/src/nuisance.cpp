#include "drfos/nuisance.hpp"

#include "drfos/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace drfos::nuisance {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double log1pexp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Eigen::VectorXd as_vector(std::span<const std::uint8_t> a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i];
  return v;
}

double penalized_loglik(const Eigen::VectorXd& beta, const Eigen::MatrixXd& z, const Eigen::VectorXd& a,
                        double ridge) {
  const Eigen::VectorXd eta = z * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += a[i] * eta[i] - log1pexp(eta[i]);
  ll /= static_cast<double>(eta.size());
  if (ridge > 0.0) ll -= 0.5 * ridge * beta.tail(beta.size() - 1).squaredNorm();
  return ll;
}

// Separation pushes some linear predictor to +-infinity; |eta| beyond this
// means fitted probabilities within 1e-13 of 0 or 1.
constexpr double kSeparationEta = 30.0;

}  // namespace

PropensityFit make_propensity_fit(Eigen::VectorXd raw, double xi) {
  if (!(xi > 0.0 && xi < 0.5)) throw std::invalid_argument("propensity clip bound must lie in (0, 0.5)");
  if (!raw.allFinite()) throw NumericalError("propensity: non-finite predicted probability");
  return {raw.cwiseMax(xi).cwiseMin(1.0 - xi), xi};
}

void OutcomeFit::validate() const {
  if (!grid) throw std::invalid_argument("OutcomeFit: null grid");
  const auto m = static_cast<Eigen::Index>(grid->size());
  if (control.cols() != m || treated.cols() != m) throw std::invalid_argument("OutcomeFit: curves do not match grid");
  if (control.rows() != treated.rows()) throw std::invalid_argument("OutcomeFit: arm row counts differ");
  if (!control.allFinite() || !treated.allFinite()) throw NumericalError("OutcomeFit: non-finite predicted value");
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& covariates) {
  Eigen::MatrixXd z(covariates.rows(), covariates.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(covariates.cols()) = covariates;
  return z;
}

double logistic_loglik(const Eigen::VectorXd& coefficients, const Eigen::MatrixXd& covariates,
                       std::span<const std::uint8_t> treatment) {
  return penalized_loglik(coefficients, with_intercept(covariates), as_vector(treatment), 0.0);
}

Eigen::VectorXd logistic_gradient(const Eigen::VectorXd& coefficients, const Eigen::MatrixXd& covariates,
                                  std::span<const std::uint8_t> treatment) {
  const Eigen::MatrixXd z = with_intercept(covariates);
  const Eigen::VectorXd eta = z * coefficients;
  Eigen::VectorXd resid = as_vector(treatment);
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid[i] -= sigmoid(eta[i]);
  return z.transpose() * resid / static_cast<double>(eta.size());
}

LogisticFit fit_logistic(const Eigen::MatrixXd& covariates, std::span<const std::uint8_t> treatment,
                         const LogisticOptions& options) {
  const auto n = static_cast<Eigen::Index>(treatment.size());
  if (covariates.rows() != n) throw std::invalid_argument("fit_logistic: covariate rows differ from treatment length");
  const auto treated = std::count(treatment.begin(), treatment.end(), std::uint8_t{1});
  if (treated == 0 || treated == n) throw ValidationError("fit_logistic: both treatment arms must be present");

  const Eigen::MatrixXd z = with_intercept(covariates);
  const Eigen::VectorXd a = as_vector(treatment);
  const auto q = z.cols();
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(q, options.ridge);
  penalty[0] = 0.0;

  LogisticFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(q);
  double ll = penalized_loglik(fit.coefficients, z, a, options.ridge);
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    fit.iterations = iter;
    const Eigen::VectorXd eta = z * fit.coefficients;
    Eigen::VectorXd p(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = sigmoid(eta[i]);
      w[i] = p[i] * (1.0 - p[i]);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::VectorXd grad = inv_n * (z.transpose() * (a - p));
    grad -= penalty.cwiseProduct(fit.coefficients);
    Eigen::MatrixXd hess = inv_n * (z.transpose() * w.asDiagonal() * z);
    hess.diagonal() += penalty;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
      std::ostringstream msg;
      msg << "fit_logistic: weighted design X^T W X is singular at iteration " << iter << " (rcond "
          << ldlt.rcond() << "); check for collinear or constant covariates";
      throw NumericalError(msg.str());
    }
    const Eigen::VectorXd step = ldlt.solve(grad);

    double scale = 1.0;
    Eigen::VectorXd candidate = fit.coefficients + step;
    double cand_ll = penalized_loglik(candidate, z, a, options.ridge);
    for (int halving = 0; halving < 30 && !(cand_ll >= ll); ++halving) {
      scale *= 0.5;
      candidate = fit.coefficients + scale * step;
      cand_ll = penalized_loglik(candidate, z, a, options.ridge);
    }
    const double change = (scale * step).cwiseAbs().maxCoeff();
    fit.coefficients = candidate;
    ll = cand_ll;

    if ((z * fit.coefficients).cwiseAbs().maxCoeff() > kSeparationEta) {
      std::ostringstream msg;
      msg << "fit_logistic: separation detected at iteration " << iter
          << " (fitted probabilities collapse to 0/1, coefficients diverging); "
             "set a ridge penalty or rely on propensity clipping with a different model";
      throw NumericalError(msg.str());
    }
    if (change < options.tol) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

PropensityFit predict_propensity(const Eigen::VectorXd& coefficients, const Eigen::MatrixXd& covariates, double xi) {
  if (coefficients.size() != covariates.cols() + 1)
    throw std::invalid_argument("predict_propensity: expected p+1 coefficients");
  const Eigen::VectorXd eta = with_intercept(covariates) * coefficients;
  Eigen::VectorXd p(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) p[i] = sigmoid(eta[i]);
  return make_propensity_fit(std::move(p), xi);
}

FosFit fit_fos_ols(const Eigen::MatrixXd& design, const Eigen::MatrixXd& outcomes, const fda::GridPtr& grid) {
  if (design.rows() != outcomes.rows()) throw std::invalid_argument("fit_fos_ols: design and outcome rows differ");
  if (static_cast<std::size_t>(outcomes.cols()) != grid->size())
    throw std::invalid_argument("fit_fos_ols: outcome columns do not match grid");
  if (design.rows() <= design.cols()) {
    std::ostringstream msg;
    msg << "fit_fos_ols: " << design.rows() << " rows for " << design.cols()
        << " columns; need more rows than columns";
    throw ValidationError(msg.str());
  }
  const Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(cond < 1e12)) {
    std::ostringstream msg;
    msg << "fit_fos_ols: design is rank-deficient (X^T X eigenvalues in [" << lo << ", " << hi
        << "], condition number " << cond << ")";
    throw NumericalError(msg.str());
  }
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericalError("fit_fos_ols: Cholesky of X^T X failed");
  FosFit fit;
  fit.grid = grid;
  fit.coefficients = llt.solve(design.transpose() * outcomes);
  fit.condition_number = cond;
  return fit;
}

Eigen::MatrixXd predict_fos(const FosFit& fit, const Eigen::MatrixXd& design) {
  if (design.cols() != fit.coefficients.rows())
    throw std::invalid_argument("predict_fos: design width does not match coefficient count");
  return design * fit.coefficients;
}

double sample_truncated_mixture(Rng& rng) {
  for (;;) {
    const double mean = rng.uniform() < 0.5 ? 0.2 : 0.8;
    const double u = mean + 0.1 * rng.normal();
    if (u >= 0.02 && u <= 0.98) return u;
  }
}

double corrupt_propensity_with(double true_p, double alpha, double u) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("corrupt_propensity: alpha_pi must lie in [0,1]");
  if (alpha == 0.0) return true_p;
  return alpha * u + (1.0 - alpha) * true_p;
}

double corrupt_propensity(double true_p, double alpha, Rng& rng) {
  return corrupt_propensity_with(true_p, alpha, sample_truncated_mixture(rng));
}

fda::Curve corrupt_outcome(const fda::Curve& true_mu, double alpha, const randproc::LowerTriangularFactor& noise,
                           Rng& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("corrupt_outcome: alpha_mu must lie in [0,1]");
  const fda::Curve draw = randproc::sample_gp(noise, true_mu.grid(), rng);
  if (alpha == 0.0) return true_mu;
  return fda::Curve(true_mu.grid(), alpha * draw.values() + (1.0 - alpha) * true_mu.values());
}

fda::Curve corrupt_outcome(const fda::Curve& true_mu, double alpha, const randproc::MaternParams& noise, Rng& rng) {
  const auto cov = randproc::build_cov_matrix(true_mu.grid(), noise);
  return corrupt_outcome(true_mu, alpha, randproc::factor_psd(cov.entries), rng);
}

// ---------------------------------------------------------------------------

std::string_view to_string(PropensityModel m) {
  switch (m) {
    case PropensityModel::logistic: return "logistic";
    case PropensityModel::oracle_corrupted: return "oracle_corrupted";
    case PropensityModel::constant: return "constant";
  }
  return "?";
}

std::string_view to_string(OutcomeModel m) {
  switch (m) {
    case OutcomeModel::fos_ols: return "fos_ols";
    case OutcomeModel::oracle_corrupted: return "oracle_corrupted";
    case OutcomeModel::zero: return "zero";
  }
  return "?";
}

std::string_view to_string(FeatureMap f) { return f == FeatureMap::raw ? "raw" : "misspecified"; }

PropensityModel parse_propensity_model(std::string_view s) {
  for (auto m : {PropensityModel::logistic, PropensityModel::oracle_corrupted, PropensityModel::constant})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown propensity model '" + std::string(s) + "' (logistic, oracle_corrupted, constant)");
}

OutcomeModel parse_outcome_model(std::string_view s) {
  for (auto m : {OutcomeModel::fos_ols, OutcomeModel::oracle_corrupted, OutcomeModel::zero})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown outcome model '" + std::string(s) + "' (fos_ols, oracle_corrupted, zero)");
}

FeatureMap parse_feature_map(std::string_view s) {
  for (auto f : {FeatureMap::raw, FeatureMap::misspecified})
    if (s == to_string(f)) return f;
  throw ConfigError("unknown feature map '" + std::string(s) + "' (raw, misspecified)");
}

Eigen::MatrixXd misspecified_features(const Eigen::MatrixXd& covariates) {
  if (covariates.cols() < 4) throw ValidationError("misspecified feature map needs at least 4 covariates");
  Eigen::MatrixXd out(covariates.rows(), 3);
  for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
    out(i, 0) = std::sin(covariates(i, 0));
    const double s = covariates(i, 1) + covariates(i, 2);
    out(i, 1) = s * s;
    out(i, 2) = std::log1p(std::abs(covariates(i, 3)));
  }
  return out;
}

Eigen::MatrixXd apply_feature_map(FeatureMap map, const Eigen::MatrixXd& covariates) {
  return map == FeatureMap::raw ? covariates : misspecified_features(covariates);
}

void NuisanceModelSpec::validate() const {
  if (!(clip_bound > 0.0 && clip_bound < 0.5)) throw ConfigError("nuisance clip bound must lie in (0, 0.5)");
  if (!(alpha_pi >= 0.0 && alpha_pi <= 1.0)) throw ConfigError("alpha_pi must lie in [0, 1]");
  if (!(alpha_mu >= 0.0 && alpha_mu <= 1.0)) throw ConfigError("alpha_mu must lie in [0, 1]");
  if (logistic.max_iter < 1) throw ConfigError("logistic max_iter must be positive");
  if (!(logistic.tol > 0.0)) throw ConfigError("logistic tol must be positive");
  if (!(logistic.ridge >= 0.0)) throw ConfigError("logistic ridge must be nonnegative");
}

namespace {

class LogisticLearner final : public PropensityLearner {
 public:
  LogisticLearner(FeatureMap features, LogisticOptions options, double clip)
      : features_(features), options_(options), clip_(clip) {}

  PropensityFit fit_predict(const fda::ObservationalDataset& train, const Eigen::MatrixXd& eval_covariates,
                            Rng&) const override {
    const auto fit = fit_logistic(apply_feature_map(features_, train.covariates()), train.treatment(), options_);
    return predict_propensity(fit.coefficients, apply_feature_map(features_, eval_covariates), clip_);
  }

 private:
  FeatureMap features_;
  LogisticOptions options_;
  double clip_;
};

class ConstantLearner final : public PropensityLearner {
 public:
  explicit ConstantLearner(double clip) : clip_(clip) {}

  PropensityFit fit_predict(const fda::ObservationalDataset& train, const Eigen::MatrixXd& eval_covariates,
                            Rng&) const override {
    train.require_both_arms("constant propensity model");
    const double share = static_cast<double>(train.treated_count()) / static_cast<double>(train.size());
    return make_propensity_fit(Eigen::VectorXd::Constant(eval_covariates.rows(), share), clip_);
  }

 private:
  double clip_;
};

class FosOlsLearner final : public OutcomeLearner {
 public:
  explicit FosOlsLearner(FeatureMap features) : features_(features) {}

  OutcomeFit fit_predict(const fda::ObservationalDataset& train, const Eigen::MatrixXd& eval_covariates,
                         Rng&) const override {
    const Eigen::MatrixXd design = with_intercept(apply_feature_map(features_, train.covariates()));
    const Eigen::MatrixXd eval_design = with_intercept(apply_feature_map(features_, eval_covariates));
    OutcomeFit out;
    out.grid = train.grid();
    for (int arm : {0, 1}) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < train.size(); ++i)
        if (train.treatment()[i] == arm) rows.push_back(i);
      Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), design.cols());
      Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), train.outcomes().cols());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = design.row(static_cast<Eigen::Index>(rows[r]));
        y.row(static_cast<Eigen::Index>(r)) = train.outcomes().row(static_cast<Eigen::Index>(rows[r]));
      }
      const auto fit = fit_fos_ols(x, y, train.grid());
      (arm == 1 ? out.treated : out.control) = predict_fos(fit, eval_design);
    }
    return out;
  }

 private:
  FeatureMap features_;
};

class ZeroLearner final : public OutcomeLearner {
 public:
  OutcomeFit fit_predict(const fda::ObservationalDataset& train, const Eigen::MatrixXd& eval_covariates,
                         Rng&) const override {
    const auto m = static_cast<Eigen::Index>(train.grid()->size());
    return {train.grid(), Eigen::MatrixXd::Zero(eval_covariates.rows(), m),
            Eigen::MatrixXd::Zero(eval_covariates.rows(), m)};
  }
};

}  // namespace

std::unique_ptr<PropensityLearner> make_propensity_learner(const NuisanceModelSpec& spec) {
  spec.validate();
  switch (spec.propensity_model) {
    case PropensityModel::logistic:
      return std::make_unique<LogisticLearner>(spec.propensity_features, spec.logistic, spec.clip_bound);
    case PropensityModel::constant:
      return std::make_unique<ConstantLearner>(spec.clip_bound);
    case PropensityModel::oracle_corrupted:
      break;
  }
  throw ConfigError("propensity model 'oracle_corrupted' is only available inside simulations");
}

std::unique_ptr<OutcomeLearner> make_outcome_learner(const NuisanceModelSpec& spec) {
  spec.validate();
  switch (spec.outcome_model) {
    case OutcomeModel::fos_ols:
      return std::make_unique<FosOlsLearner>(spec.outcome_features);
    case OutcomeModel::zero:
      return std::make_unique<ZeroLearner>();
    case OutcomeModel::oracle_corrupted:
      break;
  }
  throw ConfigError("outcome model 'oracle_corrupted' is only available inside simulations");
}

}  // namespace drfos::nuisance
