#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "commands.hpp"
#include "config.hpp"

#include "drfos/errors.hpp"
#include "drfos/simlab.hpp"

#include "json.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace drfos;
using namespace drfos::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = DRFOS_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

/// Fresh scratch directory, removed on destruction.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& tag) {
    dir = fs::temp_directory_path() / ("drfos_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

constexpr const char* kSmallSim = R"(seed: 7
simulation:
  replicates: 2
  alpha_pi: [0, 0.5]
  alpha_mu: [0]
  dump_curves: 1
matern:
  n: 150
  grid_points: 20
inference:
  draws: 200
)";

constexpr const char* kSmallEstimate = R"(seed: 3
inference:
  draws: 500
  folds: 2
)";

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("empty document is all defaults") {
    const auto c = parse_config("");
    CHECK_FALSE(c.seed.has_value());
    CHECK(c.folds == 5);
    CHECK(c.draws == 2000);
    CHECK(c.grid.base.dgp == simlab::DgpKind::matern);
    CHECK(c.grid.layout == simlab::GridLayout::slices);
    CHECK(format_config(c).find("seed") != std::string::npos);
    // Omitted keys take exactly the documented values.
    auto documented = parse_config(default_config_text());
    documented.seed.reset();
    CHECK(format_config(c) == format_config(documented));
  }
  SUBCASE("shipped defaults file matches the built-in text") {
    CHECK(slurp(kSource / "configs" / "defaults.cfg") == default_config_text());
    const auto c = parse_config(default_config_text());
    CHECK(*c.seed == 1);
    CHECK(c.grid.alpha_pi.size() == 5);
    CHECK(c.grid.cells().size() == 9);
  }
  SUBCASE("shipped configs parse") {
    const auto fig = load_config(kSource / "configs" / "matern_slices.cfg");
    CHECK(fig.grid.base.matern.n == 2000);
    const auto lin = load_config(kSource / "configs" / "linear_d3.cfg");
    CHECK(lin.grid.base.dgp == simlab::DgpKind::linear);
    CHECK(lin.grid.cells().size() == 4);
  }
  SUBCASE("canonical rendering round-trips") {
    const auto c = parse_config(kSmallSim);
    const auto text = format_config(c);
    CHECK(format_config(parse_config(text)) == text);
    CHECK(parse_config(text).grid.base.matern.n == 150);
  }
  SUBCASE("errors name the source, line, and key") {
    try {
      parse_config("seed: 1\nmatern:\n  n: 2000\n  treat_prob: 1.5\n", "x.cfg");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      CHECK(what.find("x.cfg") != std::string::npos);
      CHECK(what.find("treat_prob") != std::string::npos);
    }
    try {
      parse_config("seed: 1\nsimulation:\n  replicats: 3\n", "y.cfg");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      CHECK(what.find("y.cfg:3") != std::string::npos);
      CHECK(what.find("replicats") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("matern:\n  n: lots\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("inference:\n  draws: 50\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("simulation:\n  dgp: quadratic\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("seed: [1, 2\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/drfos.cfg"), ConfigError);
  }
  SUBCASE("hash") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  }
}

TEST_CASE("command line surface") {
  const auto v = invoke({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find("drfos 0.1.0") != std::string::npos);

  const auto h = invoke({"--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("Exit codes") != std::string::npos);
  CHECK(h.out.find("simulate") != std::string::npos);

  CHECK(invoke({}).code == kExitUsage);
  CHECK(invoke({"frobnicate"}).code == kExitUsage);
  CHECK(invoke({"simulate"}).code == kExitUsage);
  CHECK(invoke({"simulate", "--config", "/nonexistent.cfg"}).code == kExitUsage);
}

TEST_CASE("simulate") {
  Scratch s("sim");
  const auto cfg = s.dir / "small.cfg";
  spit(cfg, kSmallSim);

  const auto a = invoke({"simulate", "--config", cfg.string(), "--out", (s.dir / "a").string()});
  REQUIRE_MESSAGE(a.code == 0, a.err);
  for (const char* f : {"results.csv", "summary.csv", "failures.csv", "config.resolved.cfg", "manifest.json"})
    CHECK(fs::exists(s.dir / "a" / f));
  CHECK(slurp(s.dir / "a" / "results.csv").rfind(simlab::kResultsHeader, 0) == 0);
  CHECK(slurp(s.dir / "a" / "failures.csv") == "scenario_id,seed,message\n");
  // One curve dump per cell (first seed only).
  std::size_t dumps = 0;
  for (const auto& e : fs::directory_iterator(s.dir / "a" / "curves")) dumps += e.path().extension() == ".json";
  CHECK(dumps == 2);

  const auto m = nlohmann::json::parse(slurp(s.dir / "a" / "manifest.json"));
  CHECK(m["command"] == "simulate");
  CHECK(m["seed"] == 7);
  CHECK(m["version"] == "0.1.0");
  CHECK(m["config_hash"] == "fnv1a64:" + fnv1a_hex(slurp(s.dir / "a" / "config.resolved.cfg")));

  SUBCASE("byte-identical across reruns and job counts") {
    const auto b = invoke({"simulate", "--config", cfg.string(), "--out", (s.dir / "b").string(), "--jobs", "3"});
    REQUIRE(b.code == 0);
    for (const char* f : {"results.csv", "summary.csv", "manifest.json"})
      CHECK(slurp(s.dir / "a" / f) == slurp(s.dir / "b" / f));
  }
  SUBCASE("--seed overrides the config") {
    const auto c = invoke({"simulate", "--config", cfg.string(), "--out", (s.dir / "c").string(), "--seed", "8"});
    REQUIRE(c.code == 0);
    CHECK(slurp(s.dir / "a" / "results.csv") != slurp(s.dir / "c" / "results.csv"));
    const auto d = invoke({"simulate", "--config", cfg.string(), "--out", (s.dir / "d").string(), "--seed", "8"});
    CHECK(slurp(s.dir / "c" / "results.csv") == slurp(s.dir / "d" / "results.csv"));
  }
  SUBCASE("missing nested output directory is created") {
    const auto c = invoke({"simulate", "--config", cfg.string(), "--out", (s.dir / "x" / "y" / "z").string()});
    CHECK(c.code == 0);
    CHECK(fs::exists(s.dir / "x" / "y" / "z" / "results.csv"));
  }
  SUBCASE("unwritable output path") {
    spit(s.dir / "plain", "not a directory");
    const auto c = invoke({"simulate", "--config", cfg.string(), "--out", (s.dir / "plain" / "sub").string()});
    CHECK(c.code == kExitUsage);
    CHECK(c.err.find("output directory") != std::string::npos);
  }
  SUBCASE("seed is required") {
    spit(s.dir / "noseed.cfg", "simulation:\n  replicates: 1\n");
    const auto c = invoke({"simulate", "--config", (s.dir / "noseed.cfg").string(), "--out", (s.dir / "n").string()});
    CHECK(c.code == kExitUsage);
    CHECK(c.err.find("seed") != std::string::npos);
  }
  SUBCASE("bad config exits 1 with the location") {
    spit(s.dir / "bad.cfg", "seed: 1\nmatern:\n  bogus: 2\n");
    const auto c = invoke({"simulate", "--config", (s.dir / "bad.cfg").string(), "--out", (s.dir / "n").string()});
    CHECK(c.code == kExitUsage);
    CHECK(c.err.find("bad.cfg:3") != std::string::npos);
  }
}

TEST_CASE("estimate") {
  Scratch s("est");
  simlab::LinearDgpConfig dgp;
  dgp.n = 400;
  dgp.grid_points = 25;
  const auto draw = simlab::gen_linear_dgp(dgp, Rng(21));
  fda::write_dataset(s.dir / "data.csv", draw.data);
  spit(s.dir / "est.cfg", kSmallEstimate);

  const auto r = invoke({"estimate", "--data", (s.dir / "data.csv").string(), "--config", (s.dir / "est.cfg").string(),
                      "--out", (s.dir / "out").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("band excludes zero") != std::string::npos);

  const auto j = nlohmann::json::parse(slurp(s.dir / "out" / "report.json"));
  for (const char* key : {"grid", "beta_hat", "sigma_hat", "lower", "upper", "level", "q", "n", "J", "seed", "draws",
                          "treated", "exclusion_fraction"})
    CHECK_MESSAGE(j.contains(key), key);
  CHECK(j["n"] == 400);
  CHECK(j["J"] == 2);
  CHECK(j["seed"] == 3);
  CHECK(j["grid"].size() == 25);
  // The true effect (constant 1) lies inside the band at most points.
  std::size_t inside = 0;
  for (std::size_t k = 0; k < 25; ++k) inside += j["lower"][k] <= 1.0 && 1.0 <= j["upper"][k];
  CHECK(inside >= 20);
  const auto m = nlohmann::json::parse(slurp(s.dir / "out" / "manifest.json"));
  CHECK(m.contains("data_hash"));

  SUBCASE("deterministic") {
    const auto again = invoke({"estimate", "--data", (s.dir / "data.csv").string(), "--config",
                            (s.dir / "est.cfg").string(), "--out", (s.dir / "out2").string(), "--jobs", "2"});
    REQUIRE(again.code == 0);
    CHECK(slurp(s.dir / "out" / "report.json") == slurp(s.dir / "out2" / "report.json"));
  }
  SUBCASE("single-arm data exits 2") {
    std::vector<std::uint8_t> ones(draw.data.size(), 1);
    const fda::ObservationalDataset all_treated(draw.data.grid(), ones, draw.data.covariates(),
                                                draw.data.outcomes());
    fda::write_dataset(s.dir / "ones.csv", all_treated);
    const auto c = invoke({"estimate", "--data", (s.dir / "ones.csv").string(), "--config",
                        (s.dir / "est.cfg").string(), "--out", (s.dir / "o").string()});
    CHECK(c.code == kExitData);
  }
  SUBCASE("malformed data exits 2 naming the row") {
    spit(s.dir / "bad.csv", "A,X1,Y@0,Y@1\n1,0.5,1,2\n3,0.1,1,2\n");
    const auto c = invoke({"estimate", "--data", (s.dir / "bad.csv").string(), "--config",
                        (s.dir / "est.cfg").string(), "--out", (s.dir / "o").string()});
    CHECK(c.code == kExitData);
    CHECK(c.err.find("row") != std::string::npos);
  }
  SUBCASE("missing data file exits 2") {
    const auto c = invoke({"estimate", "--data", (s.dir / "nope.csv").string(), "--config",
                        (s.dir / "est.cfg").string(), "--out", (s.dir / "o").string()});
    CHECK(c.code == kExitData);
    CHECK(c.err.find("nope.csv") != std::string::npos);
  }
}

TEST_CASE("installed binary") {
  // The real executable forwards to the same entry point.
  const std::string cmd = std::string("\"") + DRFOS_BINARY + "\" --version > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
}
