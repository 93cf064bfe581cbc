#include "drfos/simlab.hpp"

#include "drfos/errors.hpp"
#include "drfos/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace drfos::simlab {

using estimators::Method;

namespace {

void check_alpha(double a, const char* name) {
  if (!(a >= 0.0 && a <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
}

void check_params(const randproc::MaternParams& p, const char* what) {
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

randproc::MaternParams unit_variance(randproc::MaternParams p) {
  p.variance = 1.0;
  return p;
}

randproc::LowerTriangularFactor unit_factor(const fda::GridPtr& grid, const randproc::MaternParams& p) {
  return randproc::factor_psd(randproc::build_cov_matrix(grid, unit_variance(p)).entries);
}


}  // namespace

// ---------------------------------------------------------------------------

void MaternDgpConfig::validate() const {
  if (n < 2) throw ConfigError("matern DGP: n must be at least 2");
  if (grid_points < 2) throw ConfigError("matern DGP: grid_points must be at least 2");
  check_params(signal, "matern DGP signal kernel");
  check_params(noise, "matern DGP noise kernel");
  check_params(corruption, "matern DGP corruption kernel");
  if (noise_rule == NoiseRule::explicit_variance && !(noise_variance > 0.0))
    throw ConfigError("matern DGP: explicit noise variance must be positive");
  if (!(treat_prob > 0.0 && treat_prob < 1.0)) throw ConfigError("matern DGP: treat_prob must lie in (0, 1)");
  check_alpha(alpha_pi, "alpha_pi");
  check_alpha(alpha_mu, "alpha_mu");
}

MaternFactors MaternFactors::build(const MaternDgpConfig& cfg) {
  cfg.validate();
  auto grid = fda::make_uniform_grid(cfg.grid_points);
  return {grid, unit_factor(grid, cfg.signal), unit_factor(grid, cfg.noise), unit_factor(grid, cfg.corruption)};
}

double supplement_noise_variance(const fda::Curve& beta, double treat_prob) {
  const double pooled = treat_prob * (1.0 - treat_prob) * beta.grid()->weights().dot(beta.values().cwiseAbs2());
  if (!(pooled > 0.0)) throw NumericalError("noise rule: signal variance is zero, cannot scale error curves");
  return pooled / 10.0;
}

MaternDraw gen_matern_dgp(const MaternDgpConfig& cfg, const Rng& rng) {
  return gen_matern_dgp(cfg, MaternFactors::build(cfg), rng);
}

MaternDraw gen_matern_dgp(const MaternDgpConfig& cfg, const MaternFactors& factors, const Rng& rng) {
  cfg.validate();
  const auto& grid = factors.grid;
  if (grid->size() != cfg.grid_points) throw std::invalid_argument("gen_matern_dgp: factors built for another grid");
  const auto n = static_cast<Eigen::Index>(cfg.n);
  const auto m = static_cast<Eigen::Index>(cfg.grid_points);

  Rng signal_rng = cfg.redraw_signal ? rng.derive(streams::kSignal) : Rng(cfg.signal_seed).derive(streams::kSignal);
  const double signal_scale = std::sqrt(cfg.signal.variance);
  fda::Curve beta = randproc::sample_gp(factors.signal, grid, signal_rng);
  fda::Curve rho = randproc::sample_gp(factors.signal, grid, signal_rng);
  beta = fda::Curve(grid, signal_scale * beta.values());
  rho = fda::Curve(grid, signal_scale * rho.values());
  fda::Curve mu0 = rho;
  fda::Curve mu1(grid, beta.values() + rho.values());

  const double noise_var = cfg.noise_rule == NoiseRule::supplement_ratio
                               ? supplement_noise_variance(beta, cfg.treat_prob)
                               : cfg.noise_variance;

  Rng treat_rng = rng.derive(streams::kTreatment);
  std::vector<std::uint8_t> treatment(cfg.n);
  for (auto& a : treatment) a = treat_rng.bernoulli(cfg.treat_prob) ? 1 : 0;

  Rng noise_rng = rng.derive(streams::kNoise);
  const Eigen::MatrixXd eps = randproc::sample_gp_rows(factors.noise, cfg.n, noise_rng, std::sqrt(noise_var));

  Eigen::MatrixXd y(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& mu = treatment[static_cast<std::size_t>(i)] ? mu1 : mu0;
    y.row(i) = mu.values().transpose() + eps.row(i);
  }

  MaternTruth truth{beta, rho, mu0, mu1, cfg.treat_prob, noise_var, std::nullopt, std::nullopt};
  if (cfg.keep_potential_outcomes) {
    truth.y0 = eps.rowwise() + mu0.values().transpose();
    truth.y1 = eps.rowwise() + mu1.values().transpose();
  }

  Eigen::VectorXd pi_hat = Eigen::VectorXd::Constant(n, cfg.treat_prob);
  if (cfg.alpha_pi > 0.0) {
    Rng pi_rng = rng.derive(streams::kCorruptPropensity);
    for (Eigen::Index i = 0; i < n; ++i) pi_hat[i] = nuisance::corrupt_propensity(cfg.treat_prob, cfg.alpha_pi, pi_rng);
  }

  // One corrupting curve U_i per unit, shared by both arms.
  nuisance::OutcomeFit outcome{grid, mu0.values().transpose().replicate(n, 1), mu1.values().transpose().replicate(n, 1)};
  if (cfg.alpha_mu > 0.0) {
    Rng mu_rng = rng.derive(streams::kCorruptOutcome);
    const Eigen::MatrixXd u =
        randproc::sample_gp_rows(factors.corruption, cfg.n, mu_rng, std::sqrt(cfg.corruption.variance));
    const double a = cfg.alpha_mu;
    outcome.control = a * u + (1.0 - a) * outcome.control;
    outcome.treated = a * u + (1.0 - a) * outcome.treated;
  }

  // Corrupted propensities stay inside [0.02, 0.98] by construction; clip at
  // the configured nuisance bound to preserve the positivity invariant.
  auto propensity = nuisance::make_propensity_fit(std::move(pi_hat), std::min(nuisance::kDefaultClip, 0.5 * cfg.treat_prob));

  fda::ObservationalDataset data(grid, std::move(treatment), Eigen::MatrixXd(n, 0), std::move(y));
  return {std::move(data), std::move(truth), std::move(propensity), std::move(outcome)};
}

// ---------------------------------------------------------------------------

void LinearDgpConfig::validate() const {
  if (grid_points < 2) throw ConfigError("linear DGP: grid_points must be at least 2");
  if (p < 1) throw ConfigError("linear DGP: p must be positive");
  if (n <= p) throw ConfigError("linear DGP: n must exceed p");
  check_params(coefficient, "linear DGP coefficient kernel");
  if (!(logit_noise_sd >= 0.0) || !(outcome_noise_sd >= 0.0)) throw ConfigError("linear DGP: noise sd must be >= 0");
}

LinearDraw gen_linear_dgp(const LinearDgpConfig& cfg, const Rng& rng) {
  cfg.validate();
  auto grid = fda::make_uniform_grid(cfg.grid_points);
  const auto n = static_cast<Eigen::Index>(cfg.n);
  const auto p = static_cast<Eigen::Index>(cfg.p);
  const auto m = static_cast<Eigen::Index>(cfg.grid_points);

  Rng scenario_rng = Rng(cfg.scenario_seed).derive(streams::kScenario);
  Eigen::VectorXd eta(p);
  for (Eigen::Index k = 0; k < p; ++k) eta[k] = scenario_rng.normal();

  const auto factor = randproc::factor_psd(randproc::build_cov_matrix(grid, cfg.coefficient).entries);
  Rng theta_rng = cfg.redraw_coefficients ? rng.derive(streams::kSignal) : scenario_rng.derive(streams::kSignal);
  const Eigen::MatrixXd theta0 = randproc::sample_gp_rows(factor, cfg.p, theta_rng);
  const Eigen::MatrixXd theta1 = randproc::sample_gp_rows(factor, cfg.p, theta_rng);

  Rng x_rng = rng.derive(streams::kCovariates);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < p; ++k) x(i, k) = x_rng.uniform(-1.0, 1.0);

  Rng treat_rng = rng.derive(streams::kTreatment);
  std::vector<std::uint8_t> treatment(cfg.n);
  Eigen::VectorXd true_p(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double logit_noise = cfg.logit_noise_sd * treat_rng.normal();
    true_p[i] = 1.0 / (1.0 + std::exp(-x.row(i).dot(eta) + logit_noise));
    treatment[static_cast<std::size_t>(i)] = treat_rng.bernoulli(true_p[i]) ? 1 : 0;
  }

  Rng noise_rng = rng.derive(streams::kNoise);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, m);
  const Eigen::MatrixXd base0 = x * theta0;
  const Eigen::MatrixXd base1 = (x * theta1).array() + cfg.shift;
  for (Eigen::Index i = 0; i < n; ++i) {
    y.row(i) = treatment[static_cast<std::size_t>(i)] ? base1.row(i) : base0.row(i);
    if (cfg.outcome_noise_sd > 0.0)
      for (Eigen::Index j = 0; j < m; ++j) y(i, j) += cfg.outcome_noise_sd * noise_rng.normal();
  }

  LinearTruth truth{fda::Curve::constant(grid, cfg.shift), eta, theta0, theta1, true_p};
  fda::ObservationalDataset data(grid, std::move(treatment), std::move(x), std::move(y));
  return {std::move(data), std::move(truth)};
}

// ---------------------------------------------------------------------------

std::string_view to_string(DgpKind k) { return k == DgpKind::matern ? "matern" : "linear"; }

std::string_view to_string(Misspecification m) {
  switch (m) {
    case Misspecification::none: return "none";
    case Misspecification::propensity: return "propensity";
    case Misspecification::outcome: return "outcome";
    case Misspecification::both: return "both";
  }
  return "?";
}

DgpKind parse_dgp_kind(std::string_view s) {
  if (s == "matern") return DgpKind::matern;
  if (s == "linear") return DgpKind::linear;
  throw ConfigError("unknown dgp '" + std::string(s) + "' (matern, linear)");
}

Misspecification parse_misspecification(std::string_view s) {
  for (auto m : {Misspecification::none, Misspecification::propensity, Misspecification::outcome,
                 Misspecification::both})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown misspecification '" + std::string(s) + "' (none, propensity, outcome, both)");
}

std::string_view to_string(GridLayout l) { return l == GridLayout::cartesian ? "cartesian" : "slices"; }

GridLayout parse_grid_layout(std::string_view s) {
  if (s == "cartesian") return GridLayout::cartesian;
  if (s == "slices") return GridLayout::slices;
  throw ConfigError("unknown grid layout '" + std::string(s) + "' (cartesian, slices)");
}

nuisance::NuisanceModelSpec Scenario::effective_nuisance() const {
  auto spec = nuisance;
  const bool prop = misspecification == Misspecification::propensity || misspecification == Misspecification::both;
  const bool out = misspecification == Misspecification::outcome || misspecification == Misspecification::both;
  if (prop) spec.propensity_features = nuisance::FeatureMap::misspecified;
  if (out) spec.outcome_features = nuisance::FeatureMap::misspecified;
  return spec;
}

void Scenario::validate() const {
  if (dgp == DgpKind::matern) {
    matern.validate();
  } else {
    linear.validate();
    effective_nuisance().validate();
    if (folds < 2 || folds > linear.n) throw ConfigError("folds must lie in [2, n]");
    if (misspecification != Misspecification::none && linear.p < 4)
      throw ConfigError("misspecified feature map needs p >= 4");
  }
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("band level must lie in (0, 1)");
  if (draws != 0 && draws < 100) throw ConfigError("bootstrap draws must be 0 (disabled) or at least 100");
  if (estimators.empty()) throw ConfigError("at least one estimator is required");
}

const EstimatorOutcome* ReplicateResult::find(Method m) const {
  for (const auto& e : estimates)
    if (e.method == m) return &e;
  return nullptr;
}

ScenarioRunner::ScenarioRunner(Scenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  if (scenario_.dgp == DgpKind::matern) factors_ = MaternFactors::build(scenario_.matern);
}

namespace {

EstimatorOutcome plain_outcome(const estimators::FateEstimate& est, const fda::Curve& truth, bool keep) {
  EstimatorOutcome out;
  out.method = est.method;
  out.mse = fda::l2_distance_sq(est.beta_hat, truth);
  if (keep) out.beta_hat = est.beta_hat;
  return out;
}

EstimatorOutcome drfos_outcome(const Scenario& s, const fda::Curve& beta_hat,
                               const estimators::InfluenceMatrix& influence, const fda::Curve& truth, const Rng& rng) {
  EstimatorOutcome out;
  out.method = Method::DRFOS;
  out.mse = fda::l2_distance_sq(beta_hat, truth);
  if (s.keep_curves) out.beta_hat = beta_hat;
  if (s.draws == 0) return out;
  const auto sigma = inference::estimate_sigma(influence);
  auto band = inference::supt_band(beta_hat, sigma, s.level, s.draws, rng.derive(streams::kBootstrap));
  const double delta = inference::coverage_delta(truth, band);
  out.delta = delta;
  out.simul_covered = delta >= 1.0;
  out.q = band.calibration;
  out.pointwise_sd = sigma.pointwise_sd();
  if (s.keep_curves) out.band = std::move(band);
  return out;
}

}  // namespace

ReplicateResult ScenarioRunner::run(std::uint64_t seed) const {
  const auto start = std::chrono::steady_clock::now();
  auto result = scenario_.dgp == DgpKind::matern ? run_matern(seed) : run_linear(seed);
  if (scenario_.timing) {
    result.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return result;
}

ReplicateResult ScenarioRunner::run_matern(std::uint64_t seed) const {
  const Rng rng(seed);
  const auto draw = gen_matern_dgp(scenario_.matern, *factors_, rng);
  const auto& truth = draw.truth.beta;
  ReplicateResult out{scenario_.id, seed, scenario_.alpha_pi(), scenario_.alpha_mu(), scenario_.n(), {}, truth, {}};
  for (auto m : scenario_.estimators) {
    if (m == Method::OR) {
      out.estimates.push_back(plain_outcome(estimators::estimate_or(draw.outcome), truth, scenario_.keep_curves));
    } else if (m == Method::IPW) {
      out.estimates.push_back(
          plain_outcome(estimators::estimate_ipw(draw.data, draw.propensity), truth, scenario_.keep_curves));
    } else {
      const auto dr = estimators::estimate_drfos_onefold(draw.data, draw.outcome, draw.propensity);
      out.estimates.push_back(drfos_outcome(scenario_, dr.estimate.beta_hat, dr.influence, truth, rng));
    }
  }
  return out;
}

ReplicateResult ScenarioRunner::run_linear(std::uint64_t seed) const {
  const Rng rng(seed);
  const auto draw = gen_linear_dgp(scenario_.linear, rng);
  const auto& truth = draw.truth.beta;
  ReplicateResult out{scenario_.id, seed, 0.0, 0.0, scenario_.n(), {}, truth, {}};
  const auto cf = estimators::estimate_drfos_crossfit(draw.data, scenario_.effective_nuisance(), scenario_.folds, rng);
  for (auto m : scenario_.estimators) {
    if (m == Method::OR) {
      auto est = estimators::estimate_or(cf.outcome);
      est.folds = scenario_.folds;
      out.estimates.push_back(plain_outcome(est, truth, scenario_.keep_curves));
    } else if (m == Method::IPW) {
      auto est = estimators::estimate_ipw(draw.data, cf.propensity);
      est.folds = scenario_.folds;
      out.estimates.push_back(plain_outcome(est, truth, scenario_.keep_curves));
    } else {
      out.estimates.push_back(drfos_outcome(scenario_, cf.estimate.beta_hat, cf.influence, truth, rng));
    }
  }
  return out;
}

ReplicateResult run_replicate(const Scenario& scenario, std::uint64_t seed) { return ScenarioRunner(scenario).run(seed); }

// ---------------------------------------------------------------------------

std::vector<Scenario> GridSpec::cells() const {
  std::vector<Scenario> out;
  const std::string prefix = base.id.empty() ? std::string(to_string(base.dgp)) : base.id;
  if (base.dgp == DgpKind::linear) {
    for (auto mis : misspecifications) {
      Scenario s = base;
      s.misspecification = mis;
      s.id = prefix + "_" + std::string(to_string(mis));
      out.push_back(std::move(s));
    }
    return out;
  }
  std::vector<std::pair<double, double>> pairs;
  auto add = [&](double api, double amu) {
    if (std::find(pairs.begin(), pairs.end(), std::pair{api, amu}) == pairs.end()) pairs.emplace_back(api, amu);
  };
  if (layout == GridLayout::cartesian) {
    for (double api : alpha_pi)
      for (double amu : alpha_mu) add(api, amu);
  } else {
    for (double api : alpha_pi) add(api, 0.0);
    for (double amu : alpha_mu) add(0.0, amu);
  }
  for (auto [api, amu] : pairs) {
    Scenario s = base;
    s.matern.alpha_pi = api;
    s.matern.alpha_mu = amu;
    s.id = prefix + "_api" + format_number(api) + "_amu" + format_number(amu);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::uint64_t> GridSpec::seeds() const {
  std::vector<std::uint64_t> out(replicates);
  for (std::size_t r = 0; r < replicates; ++r) out[r] = seed + r;
  return out;
}

void GridSpec::validate() const {
  if (replicates == 0) throw ConfigError("replicates must be positive");
  if (base.dgp == DgpKind::matern && (alpha_pi.empty() || alpha_mu.empty()))
    throw ConfigError("alpha_pi and alpha_mu lists must be nonempty");
  if (base.dgp == DgpKind::linear && misspecifications.empty())
    throw ConfigError("misspecification list must be nonempty");
  for (double a : alpha_pi) check_alpha(a, "alpha_pi");
  for (double a : alpha_mu) check_alpha(a, "alpha_mu");
  for (const auto& c : cells()) c.validate();
}

std::vector<CellSummary> summarize(const std::vector<Scenario>& cells, const std::vector<ReplicateResult>& rows,
                                   const std::vector<ReplicateFailure>& failures) {
  std::vector<CellSummary> out;
  for (const auto& cell : cells) {
    const auto failed = static_cast<std::size_t>(std::count_if(
        failures.begin(), failures.end(), [&](const ReplicateFailure& f) { return f.scenario_id == cell.id; }));
    for (auto method : cell.estimators) {
      std::vector<double> mses;
      double delta_sum = 0.0;
      std::size_t delta_count = 0;
      std::size_t covered = 0;
      for (const auto& row : rows) {
        if (row.scenario_id != cell.id) continue;
        const auto* e = row.find(method);
        if (!e) continue;
        mses.push_back(e->mse);
        if (e->delta) {
          delta_sum += *e->delta;
          ++delta_count;
          covered += *e->simul_covered ? 1 : 0;
        }
      }
      CellSummary s;
      s.scenario_id = cell.id;
      s.alpha_pi = cell.alpha_pi();
      s.alpha_mu = cell.alpha_mu();
      s.n = cell.n();
      s.misspecification = cell.misspecification;
      s.method = method;
      s.replicates = mses.size();
      s.failures = failed;
      if (!mses.empty()) {
        const double k = static_cast<double>(mses.size());
        double sum = 0.0;
        for (double v : mses) sum += v;
        s.mean_mse = sum / k;
        double ss = 0.0;
        for (double v : mses) ss += (v - s.mean_mse) * (v - s.mean_mse);
        s.mse_se = mses.size() > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
        std::sort(mses.begin(), mses.end());
        const auto h = mses.size() / 2;
        s.median_mse = mses.size() % 2 ? mses[h] : 0.5 * (mses[h - 1] + mses[h]);
      }
      if (delta_count > 0) {
        s.mean_delta = delta_sum / static_cast<double>(delta_count);
        s.coverage = static_cast<double>(covered) / static_cast<double>(delta_count);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

ResultsTable run_scenario_grid(const GridSpec& spec, std::size_t jobs) {
  spec.validate();
  ResultsTable table;
  table.cells = spec.cells();
  const auto seeds = spec.seeds();
  std::vector<ScenarioRunner> runners;
  runners.reserve(table.cells.size());
  for (const auto& c : table.cells) runners.emplace_back(c);

  const std::size_t tasks = table.cells.size() * seeds.size();
  std::vector<std::optional<ReplicateResult>> results(tasks);
  std::vector<std::optional<std::string>> errors(tasks);
  parallel_for(tasks, jobs, [&](std::size_t t) {
    const auto& runner = runners[t / seeds.size()];
    const auto seed = seeds[t % seeds.size()];
    try {
      results[t] = runner.run(seed);
    } catch (const std::exception& e) {
      errors[t] = e.what();
    }
  });
  for (std::size_t t = 0; t < tasks; ++t) {
    if (results[t]) {
      table.rows.push_back(std::move(*results[t]));
    } else {
      table.failures.push_back({table.cells[t / seeds.size()].id, seeds[t % seeds.size()], *errors[t]});
    }
  }
  table.summary = summarize(table.cells, table.rows, table.failures);
  return table;
}

}  // namespace drfos::simlab
