#include "commands.hpp"

#include "config.hpp"
#include "drfos/errors.hpp"
#include "drfos/estimators.hpp"
#include "drfos/fda_core.hpp"
#include "drfos/inference.hpp"
#include "drfos/simlab.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace drfos::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

#ifndef DRFOS_VERSION
#define DRFOS_VERSION "0.0.0"
#endif

// Output-side failures (directory creation, unwritable files).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void prepare_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  if (!fs::is_directory(dir)) throw IoError("output path '" + dir.string() + "' is not a directory");
  const auto probe = dir / ".drfos_write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw IoError("output directory '" + dir.string() + "' is not writable");
  }
  fs::remove(probe, ec);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << content;
  f.flush();
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json vec_json(const Eigen::VectorXd& v) {
  auto arr = json::array();
  for (Eigen::Index j = 0; j < v.size(); ++j) arr.push_back(simlab::round12(v[j]));
  return arr;
}

json manifest(std::string_view command, const std::string& resolved_config, std::uint64_t seed) {
  return {{"tool", "drfos"},
          {"version", std::string(version())},
          {"command", std::string(command)},
          {"seed", seed},
          {"config_hash", "fnv1a64:" + fnv1a_hex(resolved_config)}};
}

// Maps the active exception onto an exit code and prints its message.
int report_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ValidationError& e) {
    err << "error: invalid data: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "error: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ConfigError& e) {
    err << "error: configuration: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: invalid input: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

std::string cell_table(const simlab::ResultsTable& table) {
  // Display only: 6 significant digits, one space between columns. The CSV
  // outputs carry full precision.
  std::ostringstream out;
  out << std::setprecision(6);
  out << std::left << std::setw(33) << "cell" << ' ' << std::setw(6) << "method" << std::right << ' ' << std::setw(5)
      << "reps" << ' ' << std::setw(12) << "mean_mse" << ' ' << std::setw(12) << "median_mse" << ' ' << std::setw(8)
      << "coverage" << '\n';
  for (const auto& s : table.summary) {
    out << std::left << std::setw(33) << s.scenario_id << ' ' << std::setw(6) << estimators::to_string(s.method)
        << std::right << ' ' << std::setw(5) << s.replicates << ' ' << std::setw(12) << s.mean_mse << ' '
        << std::setw(12) << s.median_mse << ' ' << std::setw(8);
    if (s.coverage)
      out << *s.coverage;
    else
      out << '-';
    out << '\n';
  }
  return out.str();
}

}  // namespace

std::string_view version() { return DRFOS_VERSION; }

int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    auto cfg = load_config(opts.config);
    if (opts.seed) {
      cfg.seed = opts.seed;
      cfg.grid.seed = *opts.seed;
    }
    if (!cfg.seed) throw ConfigError("simulate needs a seed: set 'seed' in the config or pass --seed");
    const auto resolved = format_config(cfg);
    prepare_output_dir(opts.out_dir);

    const auto table = simlab::run_scenario_grid(cfg.grid, opts.jobs);

    std::ostringstream results, summary, failures;
    simlab::write_results_csv(results, table);
    simlab::write_summary_csv(summary, table);
    failures << "scenario_id,seed,message\n";
    for (const auto& f : table.failures) {
      std::string msg = f.message;
      for (auto& c : msg)
        if (c == ',' || c == '\n') c = ';';
      failures << f.scenario_id << ',' << f.seed << ',' << msg << '\n';
    }
    write_file(opts.out_dir / "results.csv", results.str());
    write_file(opts.out_dir / "summary.csv", summary.str());
    write_file(opts.out_dir / "failures.csv", failures.str());
    write_file(opts.out_dir / "config.resolved.cfg", resolved);

    if (cfg.dump_curves > 0) {
      const auto dir = opts.out_dir / "curves";
      prepare_output_dir(dir);
      const auto first = cfg.grid.seed;
      for (const auto& row : table.rows) {
        if (row.seed - first >= cfg.dump_curves) continue;
        write_file(dir / (row.scenario_id + "_seed" + std::to_string(row.seed) + ".json"),
                   simlab::curve_dump_json(row) + "\n");
      }
    }

    auto m = manifest("simulate", resolved, *cfg.seed);
    m["cells"] = table.cells.size();
    m["replicates"] = cfg.grid.replicates;
    m["outputs"] = {"results.csv", "summary.csv", "failures.csv", "config.resolved.cfg"};
    write_file(opts.out_dir / "manifest.json", m.dump(2) + "\n");

    out << cell_table(table);
    out << "wrote " << table.rows.size() << " replicates (" << table.failures.size() << " failed) to "
        << opts.out_dir.string() << '\n';
    for (const auto& f : table.failures)
      err << "warning: " << f.scenario_id << " seed " << f.seed << " failed: " << f.message << '\n';
    if (table.rows.empty() && !table.failures.empty()) {
      err << "error: every replicate failed\n";
      return kExitNumerical;
    }
    return kExitOk;
  } catch (...) {
    return report_current_exception(err);
  }
}

int cmd_estimate(const EstimateOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    auto cfg = load_config(opts.config);
    if (opts.seed) cfg.seed = opts.seed;
    const std::uint64_t seed = cfg.seed.value_or(1);
    cfg.seed = seed;
    const auto resolved = format_config(cfg);
    prepare_output_dir(opts.out_dir);

    const auto data = fda::load_dataset(opts.data);
    data.require_both_arms("estimate");
    const Rng rng(seed);
    const auto fit = estimators::estimate_drfos_crossfit(data, cfg.nuisance, cfg.folds, rng, opts.jobs);
    const auto sigma = inference::estimate_sigma(fit.influence);
    const auto band =
        inference::supt_band(fit.estimate.beta_hat, sigma, cfg.level, cfg.draws, rng.derive(streams::kBootstrap), opts.jobs);
    const double excluded = inference::exclusion_fraction(band);

    const auto& grid = *data.grid();
    json report;
    report["grid"] = vec_json(Eigen::Map<const Eigen::VectorXd>(grid.points().data(), static_cast<Eigen::Index>(grid.size())));
    report["beta_hat"] = vec_json(fit.estimate.beta_hat.values());
    report["sigma_hat"] = vec_json(sigma.pointwise_sd());
    report["lower"] = vec_json(band.lower.values());
    report["upper"] = vec_json(band.upper.values());
    report["level"] = cfg.level;
    report["q"] = simlab::round12(band.calibration);
    report["n"] = data.size();
    report["J"] = cfg.folds;
    report["seed"] = seed;
    report["draws"] = cfg.draws;
    report["treated"] = data.treated_count();
    report["exclusion_fraction"] = simlab::round12(excluded);
    write_file(opts.out_dir / "report.json", report.dump(2) + "\n");
    write_file(opts.out_dir / "config.resolved.cfg", resolved);

    auto m = manifest("estimate", resolved, seed);
    m["data_hash"] = "fnv1a64:" + fnv1a_hex(read_file(opts.data));
    m["outputs"] = {"report.json", "config.resolved.cfg"};
    write_file(opts.out_dir / "manifest.json", m.dump(2) + "\n");

    const auto& b = fit.estimate.beta_hat.values();
    out << "DR-FoS estimate: n=" << data.size() << " (" << data.treated_count() << " treated), m=" << grid.size()
        << ", J=" << cfg.folds << ", seed=" << seed << '\n';
    out << "beta_hat range: [" << simlab::format_number(b.minCoeff()) << ", " << simlab::format_number(b.maxCoeff())
        << "], integral " << simlab::format_number(fda::trapezoid_integrate(fit.estimate.beta_hat)) << '\n';
    out << simlab::format_number(100.0 * cfg.level) << "% simultaneous band: q=" << simlab::format_number(band.calibration)
        << " (" << cfg.draws << " draws)\n";
    out << "band excludes zero on " << simlab::format_number(100.0 * simlab::round12(excluded))
        << "% of the domain\n";
    out << "report: " << (opts.out_dir / "report.json").string() << '\n';
    return kExitOk;
  } catch (...) {
    return report_current_exception(err);
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"drfos: doubly robust estimation of functional average treatment effects"};
  app.set_version_flag("--version", std::string("drfos ") + std::string(version()));
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 1 usage/config/I-O, 2 data validation, 3 numerical failure.\n\n"
             "Default configuration (all keys optional):\n\n" +
             std::string(default_config_text()));

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo scenario grid");
  simulate->add_option("--config", sim.config, "Config file (YAML)")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out_dir, "Output directory (created if missing)")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "Override the config seed");
  simulate->add_option("--jobs", sim.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  EstimateOptions est;
  auto* estimate = app.add_subcommand("estimate", "Estimate the FATE and a simultaneous band on a dataset");
  estimate->add_option("--data", est.data, "Dataset in wide CSV format")->required();
  estimate->add_option("--config", est.config, "Config file (YAML)")->required()->check(CLI::ExistingFile);
  estimate->add_option("--out", est.out_dir, "Output directory (created if missing)")->capture_default_str();
  estimate->add_option("--seed", est.seed, "Override the config seed");
  estimate->add_option("--jobs", est.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (simulate->parsed()) return cmd_simulate(sim, out, err);
  return cmd_estimate(est, out, err);
}

}  // namespace drfos::cli
