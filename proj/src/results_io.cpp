#include "drfos/simlab.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

namespace drfos::simlab {

namespace {

constexpr int kDigits = 12;

void write_optional(std::ostream& out, const std::optional<double>& v) {
  if (v) out << format_number(*v);
}

nlohmann::json curve_json(const Eigen::VectorXd& v) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index j = 0; j < v.size(); ++j) arr.push_back(round12(v[j]));
  return arr;
}

}  // namespace

std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, kDigits);
  return std::string(buf, res.ptr);
}

double round12(double v) {
  if (!std::isfinite(v) || v == 0.0) return v;
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, kDigits - 1);
  double out = 0.0;
  std::from_chars(buf, res.ptr, out);
  return out;
}

void write_results_csv(std::ostream& out, const ResultsTable& table) {
  out << kResultsHeader << '\n';
  for (const auto& row : table.rows) {
    for (const auto& e : row.estimates) {
      out << row.scenario_id << ',' << format_number(row.alpha_pi) << ',' << format_number(row.alpha_mu) << ','
          << row.n << ',' << row.seed << ',' << estimators::to_string(e.method) << ',' << format_number(e.mse) << ',';
      write_optional(out, e.delta);
      out << ',';
      if (e.simul_covered) out << (*e.simul_covered ? 1 : 0);
      out << ',';
      write_optional(out, e.q);
      out << ',';
      write_optional(out, row.runtime_ms);
      out << '\n';
    }
  }
}

void write_summary_csv(std::ostream& out, const ResultsTable& table) {
  out << kSummaryHeader << '\n';
  for (const auto& s : table.summary) {
    out << s.scenario_id << ',' << format_number(s.alpha_pi) << ',' << format_number(s.alpha_mu) << ',' << s.n << ','
        << to_string(s.misspecification) << ',' << estimators::to_string(s.method) << ',' << s.replicates << ','
        << s.failures << ',';
    if (s.replicates > 0) {
      out << format_number(s.mean_mse) << ',' << format_number(s.median_mse) << ',' << format_number(s.mse_se);
    } else {
      out << ",,";
    }
    out << ',';
    write_optional(out, s.mean_delta);
    out << ',';
    write_optional(out, s.coverage);
    out << '\n';
  }
}

std::string curve_dump_json(const ReplicateResult& row) {
  nlohmann::json doc;
  doc["scenario_id"] = row.scenario_id;
  doc["seed"] = row.seed;
  doc["grid"] = curve_json(Eigen::Map<const Eigen::VectorXd>(row.truth.grid()->points().data(),
                                                             static_cast<Eigen::Index>(row.truth.size())));
  doc["beta"] = curve_json(row.truth.values());
  doc["estimates"] = nlohmann::json::object();
  for (const auto& e : row.estimates) {
    if (e.beta_hat) doc["estimates"][std::string(estimators::to_string(e.method))] = curve_json(e.beta_hat->values());
    if (e.band) {
      doc["band"] = {{"estimator", std::string(estimators::to_string(e.method))},
                     {"lower", curve_json(e.band->lower.values())},
                     {"upper", curve_json(e.band->upper.values())},
                     {"level", e.band->level},
                     {"q", round12(e.band->calibration)}};
    }
  }
  return doc.dump(2);
}

}  // namespace drfos::simlab
