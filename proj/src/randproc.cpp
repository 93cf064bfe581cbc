#include "drfos/randproc.hpp"

#include "drfos/errors.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace drfos::randproc {

namespace {

// Half-integer orders nu = k + 1/2 for k = 0..3.
std::optional<int> half_integer_order(double nu) {
  for (int k = 0; k <= 3; ++k) {
    if (std::abs(nu - (k + 0.5)) < 1e-12) return k;
  }
  return std::nullopt;
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

}  // namespace

void MaternParams::validate() const {
  if (!(variance > 0.0) || !(smoothness > 0.0) || !(length_scale > 0.0)) {
    throw std::invalid_argument("MaternParams: variance, smoothness and length_scale must be positive");
  }
  if (!half_integer_order(smoothness)) {
    std::ostringstream msg;
    msg << "MaternParams: smoothness " << smoothness << " unsupported; use 0.5, 1.5, 2.5 or 3.5";
    throw std::invalid_argument(msg.str());
  }
}

double matern_cov(double s, double t, const MaternParams& p) {
  p.validate();
  const int k = *half_integer_order(p.smoothness);
  const double d = std::abs(s - t);
  const double r = std::sqrt(2.0 * p.smoothness) * d / p.length_scale;
  // nu = k + 1/2:  exp(-r) k!/(2k)! sum_i (k+i)! / (i! (k-i)!) (2r)^(k-i)
  double poly = 0.0;
  for (int i = 0; i <= k; ++i) {
    poly += factorial(k + i) / (factorial(i) * factorial(k - i)) * std::pow(2.0 * r, k - i);
  }
  poly *= factorial(k) / factorial(2 * k);
  return p.variance * poly * std::exp(-r);
}

CovarianceMatrix build_cov_matrix(const fda::GridPtr& grid, const MaternParams& p) {
  p.validate();
  const auto m = static_cast<Eigen::Index>(grid->size());
  Eigen::MatrixXd c(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    c(i, i) = p.variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = matern_cov((*grid)[static_cast<std::size_t>(i)], (*grid)[static_cast<std::size_t>(j)], p);
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  return {grid, std::move(c)};
}

double default_jitter_start(const Eigen::MatrixXd& c) {
  const double scale = c.rows() > 0 ? c.trace() / static_cast<double>(c.rows()) : 0.0;
  return 1e-10 * (scale > 0.0 ? scale : 1.0);
}

LowerTriangularFactor factor_psd(const Eigen::MatrixXd& c) { return factor_psd(c, default_jitter_start(c)); }

LowerTriangularFactor factor_psd(const Eigen::MatrixXd& c, double jitter_start) {
  if (c.rows() != c.cols() || c.rows() == 0) throw std::invalid_argument("factor_psd: need a nonempty square matrix");
  if (!c.allFinite()) throw NumericalError("factor_psd: matrix has non-finite entries");
  const double diag_scale = std::max(c.diagonal().cwiseAbs().maxCoeff(), jitter_start);
  const auto m = c.rows();

  std::array<double, 12> ladder{};
  ladder[0] = 0.0;
  for (int k = 0; k <= 10; ++k) ladder[static_cast<std::size_t>(k + 1)] = jitter_start * std::pow(4.0, k);

  for (double delta : ladder) {
    Eigen::MatrixXd loaded = c;
    loaded.diagonal().array() += delta;
    Eigen::LLT<Eigen::MatrixXd> llt(loaded);
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd lower = llt.matrixL();
    if (!lower.allFinite()) continue;
    const double residual = (lower * lower.transpose() - loaded).cwiseAbs().maxCoeff();
    if (residual > 1e-8 * (diag_scale + delta)) continue;
    return {std::move(lower), delta};
  }
  std::ostringstream msg;
  msg << "factor_psd: " << m << "x" << m << " matrix is indefinite beyond the jitter ladder (max jitter "
      << ladder.back() << ")";
  throw NumericalError(msg.str());
}

Eigen::MatrixXd sample_gp_rows(const LowerTriangularFactor& factor, std::size_t count, Rng& rng, double scale) {
  const auto m = factor.lower.rows();
  Eigen::MatrixXd z(m, static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    for (Eigen::Index j = 0; j < m; ++j) z(j, i) = rng.normal();
  }
  Eigen::MatrixXd draws = factor.lower.triangularView<Eigen::Lower>() * z;
  if (scale != 1.0) draws *= scale;
  return draws.transpose();
}

fda::Curve sample_gp(const LowerTriangularFactor& factor, const fda::Curve& mean, Rng& rng) {
  if (factor.dim() != mean.size()) throw std::invalid_argument("sample_gp: factor dimension does not match grid");
  Eigen::VectorXd draw = sample_gp_rows(factor, 1, rng).row(0).transpose();
  return fda::Curve(mean.grid(), mean.values() + draw);
}

fda::Curve sample_gp(const LowerTriangularFactor& factor, const fda::GridPtr& grid, Rng& rng) {
  return sample_gp(factor, fda::Curve::zeros(grid), rng);
}

}  // namespace drfos::randproc
