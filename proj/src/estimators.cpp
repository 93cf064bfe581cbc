#include "drfos/estimators.hpp"

#include "drfos/errors.hpp"
#include "drfos/parallel.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

namespace drfos::estimators {

namespace {

void require_rows(std::size_t expected, std::size_t actual, const char* what) {
  if (expected != actual) {
    std::ostringstream msg;
    msg << what << ": expected " << expected << " units, got " << actual;
    throw std::invalid_argument(msg.str());
  }
}

// Rethrows a library error with fold context, preserving its category.
[[noreturn]] void rethrow_with_fold(std::size_t fold) {
  const auto prefix = "cross-fitting fold " + std::to_string(fold + 1) + ": ";
  try {
    throw;
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  }
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::OR: return "OR";
    case Method::IPW: return "IPW";
    case Method::DRFOS: return "DRFOS";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "or") return Method::OR;
  if (lower == "ipw") return Method::IPW;
  if (lower == "drfos" || lower == "dr-fos") return Method::DRFOS;
  throw ConfigError("unknown estimator '" + std::string(s) + "' (or, ipw, drfos)");
}

std::vector<std::vector<std::size_t>> FoldAssignment::members() const {
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t i = 0; i < fold.size(); ++i) out[fold[i]].push_back(i);
  return out;
}

FateEstimate estimate_or(const nuisance::OutcomeFit& outcome) {
  outcome.validate();
  if (outcome.size() == 0) throw std::invalid_argument("estimate_or: no units");
  Eigen::VectorXd beta = (outcome.treated - outcome.control).colwise().mean().transpose();
  return {fda::Curve(outcome.grid, std::move(beta)), Method::OR, outcome.size(), 1};
}

FateEstimate estimate_ipw(const fda::ObservationalDataset& data, const nuisance::PropensityFit& propensity) {
  require_rows(data.size(), propensity.size(), "estimate_ipw");
  Eigen::VectorXd weights(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double p = propensity.arm(1, i);
    weights[static_cast<Eigen::Index>(i)] = data.treatment()[i] ? 1.0 / p : -1.0 / (1.0 - p);
  }
  Eigen::VectorXd beta = data.outcomes().transpose() * weights / static_cast<double>(data.size());
  return {fda::Curve(data.grid(), std::move(beta)), Method::IPW, data.size(), 1};
}

Eigen::MatrixXd case_corrected(const fda::ObservationalDataset& data, const nuisance::OutcomeFit& outcome,
                               const nuisance::PropensityFit& propensity, int arm) {
  outcome.validate();
  require_rows(data.size(), outcome.size(), "case_corrected (outcome fit)");
  require_rows(data.size(), propensity.size(), "case_corrected (propensity fit)");
  if (!fda::same_grid(data.grid(), outcome.grid)) throw std::invalid_argument("case_corrected: grid mismatch");
  Eigen::MatrixXd gamma = outcome.arm(arm);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.treatment()[i] != arm) continue;
    const auto r = static_cast<Eigen::Index>(i);
    gamma.row(r) += (data.outcomes().row(r) - outcome.arm(arm).row(r)) / propensity.arm(arm, i);
  }
  return gamma;
}

DrFosResult estimate_drfos_onefold(const fda::ObservationalDataset& data, const nuisance::OutcomeFit& outcome,
                                   const nuisance::PropensityFit& propensity) {
  Eigen::MatrixXd diff = case_corrected(data, outcome, propensity, 1) - case_corrected(data, outcome, propensity, 0);
  Eigen::VectorXd beta = diff.colwise().mean().transpose();
  diff.rowwise() -= beta.transpose();
  DrFosResult out{{fda::Curve(data.grid(), std::move(beta)), Method::DRFOS, data.size(), 1},
                  {data.grid(), std::move(diff), true}};
  return out;
}

FoldAssignment make_folds(std::size_t n, std::size_t folds, Rng& rng) {
  if (folds < 2 || folds > n) {
    std::ostringstream msg;
    msg << "make_folds: need 2 <= J <= n, got J=" << folds << " with n=" << n;
    throw ConfigError(msg.str());
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  FoldAssignment out{std::vector<std::size_t>(n), folds};
  const std::size_t base = n / folds;
  const std::size_t extra = n % folds;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) out.fold[order[pos++]] = f;
  }
  return out;
}

CrossfitResult estimate_drfos_crossfit(const fda::ObservationalDataset& data,
                                       const nuisance::PropensityLearner& propensity,
                                       const nuisance::OutcomeLearner& outcome, std::size_t folds, const Rng& rng,
                                       std::size_t jobs) {
  data.require_both_arms("DR-FoS cross-fitting");
  Rng fold_rng = rng.derive(streams::kFolds);
  FoldAssignment assignment = make_folds(data.size(), folds, fold_rng);
  const auto members = assignment.members();

  std::vector<std::vector<std::size_t>> complements(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    for (std::size_t i = 0; i < data.size(); ++i)
      if (assignment.fold[i] != f) complements[f].push_back(i);
    std::size_t treated = 0;
    for (auto i : complements[f]) treated += data.treatment()[i];
    if (treated == 0 || treated == complements[f].size()) {
      std::ostringstream msg;
      msg << "cross-fitting fold " << f + 1 << ": training complement has only "
          << (treated == 0 ? "controls" : "treated units") << "; use fewer folds or more data";
      throw ValidationError(msg.str());
    }
  }

  struct FoldOutput {
    DrFosResult result;
    nuisance::OutcomeFit outcome;
    nuisance::PropensityFit propensity;
  };
  std::vector<std::optional<FoldOutput>> outputs(folds);
  parallel_for(folds, jobs, [&](std::size_t f) {
    try {
      const auto train = data.subset(complements[f]);
      const auto eval = data.subset(members[f]);
      Rng learner_rng = rng.derive(f + 1);
      Rng prop_rng = learner_rng.derive(0);
      Rng out_rng = learner_rng.derive(1);
      auto pf = propensity.fit_predict(train, eval.covariates(), prop_rng);
      auto of = outcome.fit_predict(train, eval.covariates(), out_rng);
      auto res = estimate_drfos_onefold(eval, of, pf);
      outputs[f] = FoldOutput{std::move(res), std::move(of), std::move(pf)};
    } catch (const Error&) {
      rethrow_with_fold(f);
    }
  });

  const auto m = static_cast<Eigen::Index>(data.grid()->size());
  const auto n = static_cast<Eigen::Index>(data.size());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  CrossfitResult out{{fda::Curve::zeros(data.grid()), Method::DRFOS, data.size(), folds},
                     {data.grid(), Eigen::MatrixXd(n, m), true},
                     std::move(assignment),
                     {},
                     {data.grid(), Eigen::MatrixXd(n, m), Eigen::MatrixXd(n, m)},
                     {Eigen::VectorXd(n), outputs.front()->propensity.clip_bound}};
  for (std::size_t f = 0; f < folds; ++f) {
    const auto& fo = *outputs[f];
    beta += fo.result.estimate.beta_hat.values();
    out.fold_estimates.push_back(fo.result.estimate.beta_hat);
    for (std::size_t k = 0; k < members[f].size(); ++k) {
      const auto i = static_cast<Eigen::Index>(members[f][k]);
      const auto r = static_cast<Eigen::Index>(k);
      // Undo the per-fold centering; rows are re-centered globally below.
      out.influence.values.row(i) = fo.result.influence.values.row(r) + fo.result.estimate.beta_hat.values().transpose();
      out.outcome.control.row(i) = fo.outcome.control.row(r);
      out.outcome.treated.row(i) = fo.outcome.treated.row(r);
      out.propensity.treated[i] = fo.propensity.treated[r];
    }
  }
  beta /= static_cast<double>(folds);
  out.influence.values.rowwise() -= beta.transpose();
  out.estimate.beta_hat = fda::Curve(data.grid(), std::move(beta));
  return out;
}

CrossfitResult estimate_drfos_crossfit(const fda::ObservationalDataset& data, const nuisance::NuisanceModelSpec& spec,
                                       std::size_t folds, const Rng& rng, std::size_t jobs) {
  const auto propensity = nuisance::make_propensity_learner(spec);
  const auto outcome = nuisance::make_outcome_learner(spec);
  return estimate_drfos_crossfit(data, *propensity, *outcome, folds, rng, jobs);
}

}  // namespace drfos::estimators
