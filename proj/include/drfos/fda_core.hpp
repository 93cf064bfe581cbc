#pragma once

// Grid-discretized functional data: time grids on [0,1], curves sampled on
// them, observational datasets of (treatment, covariates, outcome curve).

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace drfos::fda {

/// Strictly increasing points on [0,1] with 0 and 1 as endpoints.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> points);

  /// `m` equispaced points, m >= 2.
  static TimeGrid uniform(std::size_t m);

  std::size_t size() const { return points_.size(); }
  double operator[](std::size_t j) const { return points_[j]; }
  std::span<const double> points() const { return points_; }

  /// Composite-trapezoid quadrature weights; they sum to 1.
  const Eigen::VectorXd& weights() const { return weights_; }

  /// Index of the grid point closest to `t`.
  std::size_t nearest_index(double t) const;

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) { return a.points_ == b.points_; }

 private:
  std::vector<double> points_;
  Eigen::VectorXd weights_;
};

using GridPtr = std::shared_ptr<const TimeGrid>;

GridPtr make_grid(std::vector<double> points);
GridPtr make_uniform_grid(std::size_t m);

/// Same object, or equal points.
bool same_grid(const GridPtr& a, const GridPtr& b);

/// A real function sampled on a grid. Values are always finite.
class Curve {
 public:
  Curve(GridPtr grid, Eigen::VectorXd values);

  static Curve zeros(GridPtr grid);
  static Curve constant(GridPtr grid, double value);
  template <typename F>
  static Curve from_function(GridPtr grid, F&& f) {
    Eigen::VectorXd v(grid->size());
    for (std::size_t j = 0; j < grid->size(); ++j) v[static_cast<Eigen::Index>(j)] = f((*grid)[j]);
    return Curve(std::move(grid), std::move(v));
  }

  const GridPtr& grid() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t j) const { return values_[static_cast<Eigen::Index>(j)]; }

 private:
  GridPtr grid_;
  Eigen::VectorXd values_;
};

double trapezoid_integrate(const Curve& c);
/// Integral of (a - b)^2; throws std::invalid_argument on grid mismatch.
double l2_distance_sq(const Curve& a, const Curve& b);
double sup_norm(const Curve& c);

/// n units of (A_i, X_i, Y_i). Outcomes are stored row-wise as an n x m
/// matrix over a shared grid; row i is the curve Y_i.
class ObservationalDataset {
 public:
  /// Validates shapes, binary treatment, and finiteness. `p` may be zero.
  ObservationalDataset(GridPtr grid, std::vector<std::uint8_t> treatment, Eigen::MatrixXd covariates,
                       Eigen::MatrixXd outcomes);

  std::size_t size() const { return treatment_.size(); }
  std::size_t num_covariates() const { return static_cast<std::size_t>(covariates_.cols()); }
  const GridPtr& grid() const { return grid_; }
  std::span<const std::uint8_t> treatment() const { return treatment_; }
  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const Eigen::MatrixXd& outcomes() const { return outcomes_; }
  Curve outcome(std::size_t i) const;

  std::size_t treated_count() const;
  bool has_both_arms() const;
  /// Throws ValidationError unless both arms are nonempty.
  void require_both_arms(const char* context) const;

  /// Rows `rows` in the given order.
  ObservationalDataset subset(std::span<const std::size_t> rows) const;
  /// Copy with the covariate matrix replaced (same n).
  ObservationalDataset with_covariates(Eigen::MatrixXd covariates) const;

 private:
  GridPtr grid_;
  std::vector<std::uint8_t> treatment_;
  Eigen::MatrixXd covariates_;
  Eigen::MatrixXd outcomes_;
};

/// Reads the wide CSV format `A,X1,...,Xp,Y@t1,...,Y@tm`.
/// Errors are ValidationError naming the offending row and column.
ObservationalDataset load_dataset(const std::filesystem::path& path);
ObservationalDataset parse_dataset(std::string_view text);

/// Writes the wide CSV format. Grid points use 10 significant digits;
/// covariate and outcome values use the shortest round-trip representation.
void write_dataset(const std::filesystem::path& path, const ObservationalDataset& data);
std::string format_dataset(const ObservationalDataset& data);

}  // namespace drfos::fda
