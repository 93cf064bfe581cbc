#include "drfos/fda_core.hpp"

#include "drfos/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace drfos::fda {

TimeGrid::TimeGrid(std::vector<double> points) : points_(std::move(points)) {
  if (points_.size() < 2) throw std::invalid_argument("TimeGrid: need at least 2 points");
  if (points_.front() != 0.0 || points_.back() != 1.0)
    throw std::invalid_argument("TimeGrid: first point must be 0 and last point 1");
  for (std::size_t j = 1; j < points_.size(); ++j) {
    if (!(points_[j] > points_[j - 1])) {
      std::ostringstream msg;
      msg << "TimeGrid: points not strictly increasing at index " << j;
      throw std::invalid_argument(msg.str());
    }
  }
  const auto m = points_.size();
  weights_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j + 1 < m; ++j) {
    const double half = 0.5 * (points_[j + 1] - points_[j]);
    weights_[static_cast<Eigen::Index>(j)] += half;
    weights_[static_cast<Eigen::Index>(j + 1)] += half;
  }
}

TimeGrid TimeGrid::uniform(std::size_t m) {
  if (m < 2) throw std::invalid_argument("TimeGrid::uniform: need at least 2 points");
  std::vector<double> pts(m);
  for (std::size_t j = 0; j < m; ++j) pts[j] = static_cast<double>(j) / static_cast<double>(m - 1);
  return TimeGrid(std::move(pts));
}

std::size_t TimeGrid::nearest_index(double t) const {
  auto it = std::lower_bound(points_.begin(), points_.end(), t);
  if (it == points_.end()) return points_.size() - 1;
  auto j = static_cast<std::size_t>(it - points_.begin());
  if (j > 0 && (t - points_[j - 1]) <= (points_[j] - t)) --j;
  return j;
}

GridPtr make_grid(std::vector<double> points) { return std::make_shared<const TimeGrid>(std::move(points)); }

GridPtr make_uniform_grid(std::size_t m) { return std::make_shared<const TimeGrid>(TimeGrid::uniform(m)); }

bool same_grid(const GridPtr& a, const GridPtr& b) { return a == b || (a && b && *a == *b); }

Curve::Curve(GridPtr grid, Eigen::VectorXd values) : grid_(std::move(grid)), values_(std::move(values)) {
  if (!grid_) throw std::invalid_argument("Curve: null grid");
  if (static_cast<std::size_t>(values_.size()) != grid_->size())
    throw std::invalid_argument("Curve: value count does not match grid size");
  if (!values_.allFinite()) throw std::invalid_argument("Curve: non-finite value");
}

Curve Curve::zeros(GridPtr grid) { return constant(std::move(grid), 0.0); }

Curve Curve::constant(GridPtr grid, double value) {
  const auto m = static_cast<Eigen::Index>(grid->size());
  return Curve(std::move(grid), Eigen::VectorXd::Constant(m, value));
}

double trapezoid_integrate(const Curve& c) { return c.grid()->weights().dot(c.values()); }

double l2_distance_sq(const Curve& a, const Curve& b) {
  if (!same_grid(a.grid(), b.grid())) throw std::invalid_argument("l2_distance_sq: grid mismatch");
  return a.grid()->weights().dot((a.values() - b.values()).cwiseAbs2());
}

double sup_norm(const Curve& c) { return c.values().cwiseAbs().maxCoeff(); }

ObservationalDataset::ObservationalDataset(GridPtr grid, std::vector<std::uint8_t> treatment,
                                           Eigen::MatrixXd covariates, Eigen::MatrixXd outcomes)
    : grid_(std::move(grid)),
      treatment_(std::move(treatment)),
      covariates_(std::move(covariates)),
      outcomes_(std::move(outcomes)) {
  if (!grid_) throw ValidationError("dataset: null grid");
  const auto n = treatment_.size();
  if (n == 0) throw ValidationError("dataset: no units");
  if (static_cast<std::size_t>(covariates_.rows()) != n)
    throw ValidationError("dataset: covariate row count differs from treatment count");
  if (static_cast<std::size_t>(outcomes_.rows()) != n)
    throw ValidationError("dataset: outcome row count differs from treatment count");
  if (static_cast<std::size_t>(outcomes_.cols()) != grid_->size())
    throw ValidationError("dataset: outcome column count differs from grid size");
  for (std::size_t i = 0; i < n; ++i) {
    if (treatment_[i] > 1) {
      std::ostringstream msg;
      msg << "dataset: unit " << i << " has treatment " << int(treatment_[i]) << ", expected 0 or 1";
      throw ValidationError(msg.str());
    }
  }
  if (!covariates_.allFinite()) throw ValidationError("dataset: non-finite covariate");
  if (!outcomes_.allFinite()) throw ValidationError("dataset: non-finite outcome value");
}

Curve ObservationalDataset::outcome(std::size_t i) const {
  return Curve(grid_, outcomes_.row(static_cast<Eigen::Index>(i)).transpose());
}

std::size_t ObservationalDataset::treated_count() const {
  return static_cast<std::size_t>(std::count(treatment_.begin(), treatment_.end(), std::uint8_t{1}));
}

bool ObservationalDataset::has_both_arms() const {
  const auto t = treated_count();
  return t > 0 && t < size();
}

void ObservationalDataset::require_both_arms(const char* context) const {
  if (has_both_arms()) return;
  std::ostringstream msg;
  msg << context << ": all " << size() << " units are " << (treated_count() == 0 ? "controls (A=0)" : "treated (A=1)")
      << "; both treatment arms are required";
  throw ValidationError(msg.str());
}

ObservationalDataset ObservationalDataset::subset(std::span<const std::size_t> rows) const {
  const auto k = static_cast<Eigen::Index>(rows.size());
  std::vector<std::uint8_t> a(rows.size());
  Eigen::MatrixXd x(k, covariates_.cols());
  Eigen::MatrixXd y(k, outcomes_.cols());
  for (Eigen::Index r = 0; r < k; ++r) {
    const auto i = rows[static_cast<std::size_t>(r)];
    if (i >= size()) throw std::out_of_range("dataset subset: row index out of range");
    a[static_cast<std::size_t>(r)] = treatment_[i];
    x.row(r) = covariates_.row(static_cast<Eigen::Index>(i));
    y.row(r) = outcomes_.row(static_cast<Eigen::Index>(i));
  }
  return ObservationalDataset(grid_, std::move(a), std::move(x), std::move(y));
}

ObservationalDataset ObservationalDataset::with_covariates(Eigen::MatrixXd covariates) const {
  return ObservationalDataset(grid_, treatment_, std::move(covariates), outcomes_);
}

}  // namespace drfos::fda
