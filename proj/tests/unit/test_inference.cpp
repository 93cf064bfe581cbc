#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "drfos/errors.hpp"
#include "drfos/inference.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

using namespace drfos;
using namespace drfos::inference;

namespace {

// Analytic sup-t quantiles from tests/oracles/frozen_values.py:
// (2 Phi(q) - 1)^m = 0.95.
constexpr double kQ1 = 1.959963984540053;
constexpr double kQ10 = 2.799625219301103;

CovEstimate diagonal_sigma(std::size_t m, double var, std::size_t n = 100) {
  auto grid = fda::make_uniform_grid(std::max<std::size_t>(m, 2));
  const auto k = static_cast<Eigen::Index>(grid->size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(k, k);
  s.diagonal().head(static_cast<Eigen::Index>(m)).setConstant(var);
  return {{grid, s}, n};
}

estimators::InfluenceMatrix random_influence(std::size_t n, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  auto grid = fda::make_uniform_grid(m);
  Eigen::MatrixXd v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double a = rng.normal(), b = rng.normal();
    for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = a + b * (*grid)[static_cast<std::size_t>(j)] + 0.3 * rng.normal();
  }
  v.rowwise() -= v.colwise().mean();
  return {grid, v, true};
}

}  // namespace

TEST_CASE("covariance estimate") {
  auto grid = fda::make_uniform_grid(4);
  const auto zero = estimate_sigma({grid, Eigen::MatrixXd::Zero(5, 4), true});
  CHECK(zero.sigma.entries.cwiseAbs().maxCoeff() == 0.0);
  CHECK(zero.n == 5);

  Eigen::VectorXd c(4);
  c << 1.0, -2.0, 0.5, 3.0;
  Eigen::MatrixXd rows(2, 4);
  rows.row(0) = c.transpose();
  rows.row(1) = -c.transpose();
  const auto s = estimate_sigma({grid, rows, true});
  CHECK((s.sigma.entries - c * c.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((s.pointwise_sd() - c.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-15);

  const auto r = estimate_sigma(random_influence(200, 30, 4));
  CHECK(r.sigma.entries == r.sigma.entries.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.sigma.entries);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10 * r.sigma.entries.trace() / 30.0);

  CHECK_THROWS_AS(estimate_sigma({grid, Eigen::MatrixXd(0, 4), true}), std::invalid_argument);
}

TEST_CASE("sup-t calibration against analytic quantiles") {
  SUBCASE("perfectly correlated points reduce to the normal quantile") {
    auto grid = fda::make_uniform_grid(3);
    const CovEstimate s{{grid, Eigen::MatrixXd::Constant(3, 3, 1.5)}, 100};
    CHECK(std::abs(supt_quantile(s, 0.95, 20000, Rng(1)) - kQ1) < 0.03);
  }
  SUBCASE("a zero-variance point does not blow up the quantile") {
    // The jitter gives the degenerate point a tiny simulated variance; it is
    // standardized by that variance, so it acts like one more independent
    // coordinate (max of two |N(0,1)|: q = 2.2365) instead of dominating.
    const auto s = diagonal_sigma(1, 1.0);
    const double q = supt_quantile(s, 0.95, 20000, Rng(1));
    CHECK(q > kQ1);
    CHECK(q < 2.3);
  }
  SUBCASE("ten independent points") {
    const auto s = diagonal_sigma(10, 2.0);
    CHECK(std::abs(supt_quantile(s, 0.95, 100000, Rng(2)) - kQ10) < 0.05);
  }
  SUBCASE("quantile grows with the number of independent points") {
    double prev = 0.0;
    for (std::size_t m : {2u, 5u, 20u, 60u}) {
      const double q = supt_quantile(diagonal_sigma(m, 1.0), 0.95, 4000, Rng(3));
      CHECK(q > prev);
      prev = q;
    }
  }
}

TEST_CASE("bands") {
  const auto infl = random_influence(300, 25, 8);
  const auto sigma = estimate_sigma(infl);
  const auto beta = fda::Curve::from_function(infl.grid, [](double t) { return std::sin(4 * t); });

  SUBCASE("symmetric, ordered, deterministic, and independent of parallelism") {
    const auto b = supt_band(beta, sigma, 0.95, 2000, Rng(5));
    const auto c = supt_band(beta, sigma, 0.95, 2000, Rng(5), 4);
    CHECK(b.lower.values() == c.lower.values());
    CHECK(b.calibration == c.calibration);
    CHECK(((b.upper.values() - b.lower.values()).array() >= 0).all());
    CHECK(((b.upper.values() - beta.values()) - (beta.values() - b.lower.values())).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(b.draws == 2000);
    CHECK(b.level == 0.95);
  }
  SUBCASE("99% band contains the 95% band") {
    const auto b95 = supt_band(beta, sigma, 0.95, 2000, Rng(6));
    const auto b99 = supt_band(beta, sigma, 0.99, 2000, Rng(6));
    CHECK((b99.lower.values().array() <= b95.lower.values().array()).all());
    CHECK((b99.upper.values().array() >= b95.upper.values().array()).all());
  }
  SUBCASE("pointwise band sits inside the sup-t band") {
    const auto p = pointwise_band(beta, sigma, 0.95);
    const auto s = supt_band(beta, sigma, 0.95, 2000, Rng(7));
    CHECK(p.calibration == doctest::Approx(kQ1).epsilon(1e-12));
    CHECK((p.lower.values().array() >= s.lower.values().array()).all());
    CHECK((p.upper.values().array() <= s.upper.values().array()).all());
  }
  SUBCASE("quadrupling n halves the half-width") {
    CovEstimate big = sigma;
    big.n = 4 * sigma.n;
    const auto p1 = pointwise_band(beta, sigma, 0.9);
    const auto p4 = pointwise_band(beta, big, 0.9);
    const Eigen::VectorXd w1 = p1.upper.values() - beta.values();
    const Eigen::VectorXd w4 = p4.upper.values() - beta.values();
    CHECK((w1 - 2 * w4).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("zero covariance") {
    const CovEstimate zero{{infl.grid, Eigen::MatrixXd::Zero(25, 25)}, 300};
    const auto p = pointwise_band(beta, zero, 0.95);
    CHECK(p.lower.values() == beta.values());
    CHECK_THROWS_AS(supt_band(beta, zero, 0.95, 2000, Rng(1)), NumericalError);
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(supt_band(beta, sigma, 0.95, 50, Rng(1)), ConfigError);
    CHECK_THROWS_AS(supt_band(beta, sigma, 1.0, 2000, Rng(1)), ConfigError);
    CHECK_THROWS_AS(pointwise_band(beta, sigma, 0.0), ConfigError);
    CHECK_THROWS_AS(supt_band(fda::Curve::zeros(fda::make_uniform_grid(5)), sigma, 0.95, 200, Rng(1)),
                    std::invalid_argument);
  }
}

TEST_CASE("coverage fraction") {
  auto grid = fda::make_uniform_grid(101);
  const auto truth = fda::Curve::from_function(grid, [](double t) { return t; });
  const double big = 1e300;
  inference::ConfidenceBand wide{fda::Curve::constant(grid, -big), fda::Curve::constant(grid, big), 0.95, 0, 0};
  CHECK(coverage_delta(truth, wide) == 1.0);
  inference::ConfidenceBand away{fda::Curve::constant(grid, 5.0), fda::Curve::constant(grid, 6.0), 0.95, 0, 0};
  CHECK(coverage_delta(truth, away) == 0.0);
  inference::ConfidenceBand left{fda::Curve::constant(grid, -1.0), fda::Curve::constant(grid, 0.5), 0.95, 0, 0};
  CHECK(std::abs(coverage_delta(truth, left) - 0.5) <= 1.0 / 100.0);
  CHECK(exclusion_fraction(away) == 1.0);
  CHECK(exclusion_fraction(wide) == 0.0);
  CHECK_THROWS_AS(coverage_delta(fda::Curve::zeros(fda::make_uniform_grid(3)), wide), std::invalid_argument);
}

TEST_CASE("full coverage is equivalent to the sup-t statistic staying below q") {
  int covered = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto infl = random_influence(80, 15, 100 + seed);
    const auto sigma = estimate_sigma(infl);
    Rng rng(seed);
    // Perturb by a draw on the estimator's own scale, so roughly the nominal
    // fraction of fixtures is covered.
    const Eigen::VectorXd scale = sigma.pointwise_sd() / std::sqrt(80.0);
    Eigen::VectorXd t(15), b(15);
    const double common = rng.normal();
    for (int j = 0; j < 15; ++j) {
      t[j] = rng.normal();
      b[j] = t[j] + scale[j] * (1.5 * common + 0.8 * rng.normal());
    }
    const fda::Curve truth(infl.grid, t), beta(infl.grid, b);
    const auto band = supt_band(beta, sigma, 0.95, 500, Rng(seed));
    const bool by_delta = coverage_delta(truth, band) == 1.0;
    const bool by_stat = supt_statistic(beta, truth, sigma) <= band.calibration;
    CHECK(by_delta == by_stat);
    covered += by_delta;
  }
  // Both outcomes must occur for the identity check to mean anything.
  CHECK(covered > 0);
  CHECK(covered < 60);
}
