#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "drfos/errors.hpp"
#include "drfos/fda_core.hpp"
#include "drfos/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace drfos;
using namespace drfos::fda;

namespace {

ObservationalDataset small_dataset() {
  auto grid = make_grid({0.0, 0.25, 1.0});
  Eigen::MatrixXd x(3, 2);
  x << 0.5, -1.0, 1.25, 2.0, -0.125, 3.5;
  Eigen::MatrixXd y(3, 3);
  y << 1.0, 2.0, 3.0, -0.1, 0.2, 1e-300, 4.0, 5.5, 6.25;
  return ObservationalDataset(grid, {1, 0, 1}, x, y);
}

std::string csv_header(std::size_t p) {
  std::string h = "A";
  for (std::size_t k = 1; k <= p; ++k) h += ",X" + std::to_string(k);
  return h + ",Y@0,Y@0.5,Y@1\n";
}

}  // namespace

TEST_CASE("grid invariants are enforced") {
  CHECK_NOTHROW(TimeGrid({0.0, 1.0}));
  CHECK_THROWS_AS(TimeGrid({0.0}), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid({0.1, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid({0.0, 0.9}), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid({0.0, 0.5, 0.5, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid({0.0, 0.6, 0.4, 1.0}), std::invalid_argument);

  const auto g = TimeGrid::uniform(11);
  CHECK(g.size() == 11);
  CHECK(g[0] == 0.0);
  CHECK(g[10] == 1.0);
  CHECK(g.weights().sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.nearest_index(0.52) == 5);
}

TEST_CASE("curves reject mismatched lengths and non-finite values") {
  auto grid = make_uniform_grid(3);
  CHECK_THROWS_AS(Curve(grid, Eigen::VectorXd::Zero(2)), std::invalid_argument);
  Eigen::VectorXd v(3);
  v << 0.0, NAN, 1.0;
  CHECK_THROWS_AS(Curve(grid, v), std::invalid_argument);
  v << 0.0, INFINITY, 1.0;
  CHECK_THROWS_AS(Curve(grid, v), std::invalid_argument);
}

TEST_CASE("trapezoid integration") {
  SUBCASE("constant one is exact on any grid") {
    CHECK(trapezoid_integrate(Curve::constant(make_uniform_grid(7), 1.0)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(trapezoid_integrate(Curve::constant(make_grid({0.0, 0.013, 0.4, 0.41, 1.0}), 1.0)) ==
          doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("identity is exact") {
    auto nonuniform = make_grid({0.0, 0.1, 0.35, 0.8, 1.0});
    CHECK(trapezoid_integrate(Curve::from_function(nonuniform, [](double t) { return t; })) ==
          doctest::Approx(0.5).epsilon(1e-15));
    CHECK(trapezoid_integrate(Curve::from_function(make_uniform_grid(100), [](double t) { return t; })) ==
          doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("t^2 on 51 points") {
    const double v = trapezoid_integrate(Curve::from_function(make_uniform_grid(51), [](double t) { return t * t; }));
    CHECK(std::abs(v - 1.0 / 3.0) < 1e-4);
    // Independent oracle: numpy trapezoid on 51 points.
    CHECK(v == doctest::Approx(0.33340000000000003).epsilon(1e-14));
  }
  SUBCASE("linearity") {
    Rng rng(3);
    auto grid = make_grid({0.0, 0.2, 0.21, 0.7, 1.0});
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::VectorXd a(5), b(5);
      for (int j = 0; j < 5; ++j) {
        a[j] = rng.normal();
        b[j] = rng.normal();
      }
      const double al = rng.normal(), be = rng.normal();
      const double lhs = trapezoid_integrate(Curve(grid, al * a + be * b));
      const double rhs = al * trapezoid_integrate(Curve(grid, a)) + be * trapezoid_integrate(Curve(grid, b));
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
    }
  }
}

TEST_CASE("squared L2 distance") {
  auto grid = make_uniform_grid(51);
  auto a = Curve::from_function(grid, [](double t) { return std::sin(3 * t); });
  CHECK(l2_distance_sq(a, a) == 0.0);
  auto b = Curve(grid, a.values().array() + 1.0);
  CHECK(l2_distance_sq(a, b) == doctest::Approx(1.0).epsilon(1e-14));
  auto c = Curve(grid, a.values() + Eigen::VectorXd::LinSpaced(51, 0.0, 1.0));
  CHECK(std::abs(l2_distance_sq(c, a) - 1.0 / 3.0) < 1e-4);
  CHECK(l2_distance_sq(a, c) == l2_distance_sq(c, a));
  CHECK(l2_distance_sq(a, c) >= 0.0);
  CHECK_THROWS_AS(l2_distance_sq(a, Curve::zeros(make_uniform_grid(50))), std::invalid_argument);
}

TEST_CASE("sup norm") {
  auto grid = make_uniform_grid(3);
  CHECK(sup_norm(Curve::zeros(grid)) == 0.0);
  Eigen::VectorXd v(3);
  v << -3.0, 1.0, 2.0;
  CHECK(sup_norm(Curve(grid, v)) == 3.0);
  CHECK(sup_norm(Curve::from_function(make_uniform_grid(17), [](double t) { return t; })) == 1.0);

  Rng rng(11);
  auto g = make_uniform_grid(20);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd a(20), b(20);
    for (int j = 0; j < 20; ++j) {
      a[j] = rng.normal();
      b[j] = rng.normal();
    }
    CHECK(sup_norm(Curve(g, a + b)) <= sup_norm(Curve(g, a)) + sup_norm(Curve(g, b)) + 1e-15);
  }
}

TEST_CASE("dataset invariants") {
  auto grid = make_uniform_grid(3);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Ones(2, 3);
  CHECK_NOTHROW(ObservationalDataset(grid, {0, 1}, Eigen::MatrixXd(2, 0), y));
  CHECK_THROWS_AS(ObservationalDataset(grid, {0, 2}, Eigen::MatrixXd(2, 0), y), ValidationError);
  CHECK_THROWS_AS(ObservationalDataset(grid, {0, 1, 1}, Eigen::MatrixXd(3, 0), y), ValidationError);
  CHECK_THROWS_AS(ObservationalDataset(grid, {0, 1}, Eigen::MatrixXd(2, 0), Eigen::MatrixXd::Ones(2, 4)),
                  ValidationError);
  CHECK_THROWS_AS(ObservationalDataset(grid, {}, Eigen::MatrixXd(0, 0), Eigen::MatrixXd(0, 3)), ValidationError);
  Eigen::MatrixXd bad = y;
  bad(1, 2) = NAN;
  CHECK_THROWS_AS(ObservationalDataset(grid, {0, 1}, Eigen::MatrixXd(2, 0), bad), ValidationError);

  ObservationalDataset single(grid, {1, 1}, Eigen::MatrixXd(2, 0), y);
  CHECK_FALSE(single.has_both_arms());
  CHECK_THROWS_AS(single.require_both_arms("test"), ValidationError);

  const auto d = small_dataset();
  CHECK(d.treated_count() == 2);
  std::vector<std::size_t> rows{2, 0};
  const auto s = d.subset(rows);
  CHECK(s.size() == 2);
  CHECK(s.outcomes().row(0) == d.outcomes().row(2));
  CHECK(s.covariates().row(1) == d.covariates().row(0));
  CHECK(s.treatment()[1] == 1);
}

TEST_CASE("dataset CSV round trip is bit-exact") {
  const auto d = small_dataset();
  const auto text = format_dataset(d);
  CHECK(text.rfind("A,X1,X2,Y@0,Y@0.25,Y@1\n", 0) == 0);
  const auto back = parse_dataset(text);
  CHECK(*back.grid() == *d.grid());
  CHECK(back.covariates() == d.covariates());
  CHECK(back.outcomes() == d.outcomes());
  CHECK(std::vector<std::uint8_t>(back.treatment().begin(), back.treatment().end()) ==
        std::vector<std::uint8_t>(d.treatment().begin(), d.treatment().end()));

  // Random values on the default simulation grid; grid points are written at
  // ten significant digits, values at full precision.
  Rng rng(5);
  const Eigen::Index n = 25, m = 100;
  Eigen::MatrixXd x(n, 3), y(n, m);
  std::vector<std::uint8_t> a(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a[static_cast<std::size_t>(i)] = rng.bernoulli(0.5);
    for (Eigen::Index k = 0; k < 3; ++k) x(i, k) = rng.normal();
    for (Eigen::Index j = 0; j < m; ++j) y(i, j) = rng.normal() * 1e3;
  }
  ObservationalDataset big(make_uniform_grid(100), a, x, y);
  const auto tmp = std::filesystem::temp_directory_path() / "drfos_roundtrip.csv";
  write_dataset(tmp, big);
  const auto loaded = load_dataset(tmp);
  std::filesystem::remove(tmp);
  CHECK(loaded.outcomes() == big.outcomes());
  CHECK(loaded.covariates() == big.covariates());
  for (std::size_t j = 0; j < 100; ++j) CHECK(std::abs((*loaded.grid())[j] - (*big.grid())[j]) < 5e-11);
}

TEST_CASE("dataset parse errors name their location") {
  auto message = [](const std::string& text) {
    try {
      parse_dataset(text);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string("<no error>");
  };
  const auto h = csv_header(1);

  SUBCASE("non-binary treatment names the row") {
    const auto msg = message(h + "1,0.5,1,2,3\n2,0.1,1,2,3\n");
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("column A") != std::string::npos);
  }
  SUBCASE("missing outcome value names the column") {
    const auto msg = message(h + "1,0.5,1,2\n");
    CHECK(msg.find("Y@1") != std::string::npos);
  }
  SUBCASE("missing outcome column in the header") {
    const auto msg = message("A,X1,Y@0,Y@0.5\n1,0.5,1,2\n");
    CHECK(msg.find("header") != std::string::npos);
  }
  SUBCASE("ragged row with too many fields") {
    const auto msg = message(h + "1,0.5,1,2,3,4\n");
    CHECK(msg.find("row 1") != std::string::npos);
  }
  SUBCASE("non-finite value") {
    const auto msg = message(h + "1,0.5,1,nan,3\n");
    CHECK(msg.find("Y@0.5") != std::string::npos);
  }
  SUBCASE("unparseable covariate") {
    const auto msg = message(h + "0,abc,1,2,3\n");
    CHECK(msg.find("X1") != std::string::npos);
  }
  SUBCASE("bad header token") {
    CHECK(message("A,Z1,Y@0,Y@1\n1,2,3,4\n").find("header") != std::string::npos);
    CHECK(message("B,Y@0,Y@1\n1,3,4\n").find("header") != std::string::npos);
  }
  SUBCASE("empty body") { CHECK(message(h).find("no data rows") != std::string::npos); }
}

TEST_CASE("missing file is reported with its path") {
  try {
    load_dataset("/nonexistent/drfos.csv");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/drfos.csv") != std::string::npos);
  }
}
