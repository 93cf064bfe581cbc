#include "drfos/inference.hpp"

#include "drfos/errors.hpp"
#include "drfos/parallel.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace drfos::inference {

namespace {

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("band level must lie in (0, 1)");
}

void check_grid(const fda::Curve& c, const CovEstimate& sigma) {
  if (!fda::same_grid(c.grid(), sigma.sigma.grid)) throw std::invalid_argument("band: estimate and covariance grids differ");
}

ConfidenceBand make_band(const fda::Curve& beta_hat, const Eigen::VectorXd& half_width, double level, double q,
                         std::size_t draws) {
  return {fda::Curve(beta_hat.grid(), beta_hat.values() - half_width),
          fda::Curve(beta_hat.grid(), beta_hat.values() + half_width), level, q, draws};
}

}  // namespace

Eigen::VectorXd CovEstimate::pointwise_sd() const {
  Eigen::VectorXd sd = sigma.entries.diagonal().cwiseMax(0.0).cwiseSqrt();
  const double top = sd.size() ? sd.maxCoeff() : 0.0;
  return sd.cwiseMax(kSigmaFloor * top);
}

CovEstimate estimate_sigma(const estimators::InfluenceMatrix& influence) {
  if (influence.rows() == 0) throw std::invalid_argument("estimate_sigma: empty influence matrix");
  const double n = static_cast<double>(influence.rows());
  Eigen::MatrixXd s = influence.values.transpose() * influence.values / n;
  // Symmetrize exactly; the product is symmetric up to rounding.
  s = 0.5 * (s + s.transpose()).eval();
  return {{influence.grid, std::move(s)}, influence.rows()};
}

double supt_quantile(const CovEstimate& sigma, double level, std::size_t draws, const Rng& rng, std::size_t jobs) {
  check_level(level);
  if (draws < 100) throw ConfigError("bootstrap draws must be at least 100");
  const Eigen::VectorXd sd = sigma.pointwise_sd();
  if (!(sd.maxCoeff() > 0.0)) throw NumericalError("supt band: estimated covariance is identically zero");
  const auto factor = randproc::factor_psd(sigma.sigma.entries);
  // Standardize each coordinate by the exact standard deviation of the
  // simulated process (row norms of L, i.e. sqrt(sigma^2 + jitter)), so a
  // jittered near-degenerate point contributes a unit-variance term rather
  // than jitter noise divided by the floored sigma_hat.
  const Eigen::VectorXd draw_sd = factor.lower.rowwise().norm();
  const Eigen::VectorXd inv_sd = draw_sd.cwiseMax(kSigmaFloor * draw_sd.maxCoeff()).cwiseInverse();

  std::vector<double> maxima(draws);
  parallel_for(draws, jobs, [&](std::size_t b) {
    Rng r = rng.derive(b);
    const Eigen::VectorXd z = randproc::sample_gp_rows(factor, 1, r).row(0).transpose();
    maxima[b] = z.cwiseProduct(inv_sd).cwiseAbs().maxCoeff();
  });
  std::sort(maxima.begin(), maxima.end());
  // Inverse empirical CDF: smallest M with F_B(M) >= level.
  const auto k = static_cast<std::size_t>(std::ceil(level * static_cast<double>(draws) - 1e-9));
  return maxima[std::clamp<std::size_t>(k, 1, draws) - 1];
}

ConfidenceBand supt_band(const fda::Curve& beta_hat, const CovEstimate& sigma, double level, std::size_t draws,
                         const Rng& rng, std::size_t jobs) {
  check_grid(beta_hat, sigma);
  const double q = supt_quantile(sigma, level, draws, rng, jobs);
  const Eigen::VectorXd half = q * sigma.pointwise_sd() / std::sqrt(static_cast<double>(sigma.n));
  return make_band(beta_hat, half, level, q, draws);
}

ConfidenceBand pointwise_band(const fda::Curve& beta_hat, const CovEstimate& sigma, double level) {
  check_level(level);
  check_grid(beta_hat, sigma);
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
  const Eigen::VectorXd half = z * sigma.pointwise_sd() / std::sqrt(static_cast<double>(sigma.n));
  return make_band(beta_hat, half, level, z, 0);
}

double coverage_delta(const fda::Curve& truth, const ConfidenceBand& band) {
  if (!fda::same_grid(truth.grid(), band.lower.grid())) throw std::invalid_argument("coverage_delta: grid mismatch");
  const auto& w = truth.grid()->weights();
  double covered = 0.0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (band.lower[j] <= truth[j] && truth[j] <= band.upper[j]) {
      covered += w[static_cast<Eigen::Index>(j)];
      ++hits;
    }
  }
  // Exact endpoints so "covered everywhere" is not lost to summation order.
  if (hits == truth.size()) return 1.0;
  if (hits == 0) return 0.0;
  return std::clamp(covered / w.sum(), 0.0, 1.0);
}

double exclusion_fraction(const ConfidenceBand& band) {
  const auto& w = band.lower.grid()->weights();
  double excluded = 0.0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < band.lower.size(); ++j) {
    if (band.lower[j] > 0.0 || band.upper[j] < 0.0) {
      excluded += w[static_cast<Eigen::Index>(j)];
      ++hits;
    }
  }
  if (hits == band.lower.size()) return 1.0;
  if (hits == 0) return 0.0;
  return std::clamp(excluded / w.sum(), 0.0, 1.0);
}

double supt_statistic(const fda::Curve& beta_hat, const fda::Curve& truth, const CovEstimate& sigma) {
  check_grid(beta_hat, sigma);
  if (!fda::same_grid(beta_hat.grid(), truth.grid())) throw std::invalid_argument("supt_statistic: grid mismatch");
  const Eigen::VectorXd dev = (beta_hat.values() - truth.values()).cwiseAbs().cwiseQuotient(sigma.pointwise_sd());
  return std::sqrt(static_cast<double>(sigma.n)) * dev.maxCoeff();
}

}  // namespace drfos::inference
