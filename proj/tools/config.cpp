#include "config.hpp"

#include "drfos/errors.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

namespace drfos::cli {

namespace {

constexpr std::string_view kDefaults = R"(# drfos defaults. Every key is optional; omitted keys take these values.

# Master seed; replicate r of every cell uses seed + r.
seed: 1

simulation:
  dgp: matern              # matern | linear
  replicates: 30
  layout: slices           # slices: (a, 0) and (0, b); cartesian: every pair
  alpha_pi: [0, 0.25, 0.5, 0.75, 1]
  alpha_mu: [0, 0.25, 0.5, 0.75, 1]
  misspecification: [none] # linear dgp: none | propensity | outcome | both
  estimators: [or, ipw, drfos]
  dump_curves: 0           # JSON curve dumps for the first k seeds per cell
  timing: false            # fill runtime_ms (makes output time-dependent)

matern:
  n: 2000
  grid_points: 100
  treat_prob: 0.5
  signal: {variance: 1, smoothness: 3.5, length_scale: 0.25}
  noise: {smoothness: 2.5, length_scale: 0.25}
  noise_rule: supplement_ratio  # supplement_ratio | explicit
  noise_variance: 0.1           # used by noise_rule: explicit
  corruption: {variance: 1, smoothness: 2.5, length_scale: 0.25}
  redraw_signal: true           # false: beta and rho fixed by signal_seed
  signal_seed: 0

linear:
  n: 1000
  grid_points: 100
  p: 5
  coefficient: {variance: 1, smoothness: 3.5, length_scale: 0.25}
  shift: 1
  logit_noise_sd: 1
  outcome_noise_sd: 1
  scenario_seed: 0
  redraw_coefficients: true

nuisance:
  propensity_model: logistic    # logistic | constant
  outcome_model: fos_ols        # fos_ols | zero
  propensity_features: raw      # raw | misspecified
  outcome_features: raw
  clip_bound: 0.02
  logistic: {max_iter: 100, tol: 1.0e-8, ridge: 0}

inference:
  folds: 5
  level: 0.95
  draws: 2000
)";

class Section {
 public:
  Section(YAML::Node node, std::string path, const std::string& source)
      : node_(std::move(node)), path_(std::move(path)), source_(source) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) fail(node_, "expected a mapping");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0 || !node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) fail(kv.first, "unknown key '" + key + "'");
    }
  }

  Section child(const std::string& key) { return Section(take(key), qualified(key), source_); }

  /// Raw node for `key` (possibly undefined); marks the key as known.
  YAML::Node take(const std::string& key) {
    seen_.insert(key);
    if (!node_ || !node_.IsMap()) return YAML::Node();
    return node_[key];
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const auto node = take(key);
    if (node && !node.IsNull()) out = convert<T>(node, qualified(key));
  }

  template <class T, class Parse>
  void get_enum(const std::string& key, T& out, Parse parse) {
    const auto node = take(key);
    if (!node || node.IsNull()) return;
    const auto text = convert<std::string>(node, qualified(key));
    try {
      out = parse(text);
    } catch (const ConfigError& e) {
      fail(node, qualified(key) + ": " + e.what());
    }
  }

  template <class T, class Parse>
  void get_list(const std::string& key, std::vector<T>& out, Parse parse) {
    const auto node = take(key);
    if (!node || node.IsNull()) return;
    if (!node.IsSequence()) fail(node, qualified(key) + ": expected a list");
    out.clear();
    for (const auto& item : node) out.push_back(parse(item, qualified(key)));
  }

  [[noreturn]] void fail(const YAML::Node& node, const std::string& what) const {
    std::ostringstream msg;
    msg << source_;
    if (node.Mark().line >= 0) msg << ':' << node.Mark().line + 1;
    msg << ": " << what;
    throw ConfigError(msg.str());
  }

  template <class T>
  T convert(const YAML::Node& node, const std::string& name) const {
    if (!node.IsScalar()) fail(node, name + ": expected a scalar");
    const auto& s = node.Scalar();
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      bool v = false;
      if (!YAML::convert<bool>::decode(node, v)) fail(node, name + ": expected true or false, got '" + s + "'");
      return v;
    } else if constexpr (std::is_integral_v<T>) {
      if (!s.empty() && s[0] == '-') fail(node, name + ": expected a nonnegative integer, got '" + s + "'");
      T v{};
      if (!YAML::convert<T>::decode(node, v)) fail(node, name + ": expected a nonnegative integer, got '" + s + "'");
      return v;
    } else {
      T v{};
      if (!YAML::convert<T>::decode(node, v)) fail(node, name + ": expected a number, got '" + s + "'");
      return v;
    }
  }

 private:
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  YAML::Node node_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> seen_;
};

void read_kernel(Section s, randproc::MaternParams& p, bool with_variance) {
  if (with_variance) s.get("variance", p.variance);
  s.get("smoothness", p.smoothness);
  s.get("length_scale", p.length_scale);
}

simlab::NoiseRule parse_noise_rule(std::string_view s) {
  if (s == "supplement_ratio") return simlab::NoiseRule::supplement_ratio;
  if (s == "explicit") return simlab::NoiseRule::explicit_variance;
  throw ConfigError("unknown noise rule '" + std::string(s) + "' (supplement_ratio, explicit)");
}

std::string_view to_string(simlab::NoiseRule r) {
  return r == simlab::NoiseRule::supplement_ratio ? "supplement_ratio" : "explicit";
}

void emit_kernel(YAML::Emitter& e, const char* key, const randproc::MaternParams& p, bool with_variance) {
  e << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginMap;
  if (with_variance) e << YAML::Key << "variance" << YAML::Value << p.variance;
  e << YAML::Key << "smoothness" << YAML::Value << p.smoothness;
  e << YAML::Key << "length_scale" << YAML::Value << p.length_scale;
  e << YAML::EndMap;
}

template <class Range, class F>
void emit_list(YAML::Emitter& e, const char* key, const Range& r, F f) {
  e << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& v : r) e << f(v);
  e << YAML::EndSeq;
}

}  // namespace

std::string_view default_config_text() { return kDefaults; }

RunConfig parse_config(std::string_view text, std::string_view source_view) {
  const std::string source(source_view);
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    std::ostringstream msg;
    msg << source << ':' << e.mark.line + 1 << ": " << e.msg;
    throw ConfigError(msg.str());
  }

  RunConfig cfg;
  // The tool's documented grid defaults differ from the library's
  // single-cell GridSpec default.
  cfg.grid.layout = simlab::GridLayout::slices;
  cfg.grid.alpha_pi = {0.0, 0.25, 0.5, 0.75, 1.0};
  cfg.grid.alpha_mu = cfg.grid.alpha_pi;
  auto& base = cfg.grid.base;
  {
    Section top(root, "", source);
    if (const auto node = top.take("seed"); node && !node.IsNull())
      cfg.seed = top.convert<std::uint64_t>(node, "seed");

    {
      auto s = top.child("simulation");
      s.get_enum("dgp", base.dgp, simlab::parse_dgp_kind);
      s.get("replicates", cfg.grid.replicates);
      s.get_enum("layout", cfg.grid.layout, simlab::parse_grid_layout);
      auto number = [&](const YAML::Node& n, const std::string& name) { return s.convert<double>(n, name); };
      s.get_list("alpha_pi", cfg.grid.alpha_pi, number);
      s.get_list("alpha_mu", cfg.grid.alpha_mu, number);
      s.get_list("misspecification", cfg.grid.misspecifications, [&](const YAML::Node& n, const std::string& name) {
        try {
          return simlab::parse_misspecification(s.convert<std::string>(n, name));
        } catch (const ConfigError& e) {
          s.fail(n, name + ": " + e.what());
        }
      });
      s.get_list("estimators", base.estimators, [&](const YAML::Node& n, const std::string& name) {
        try {
          return estimators::parse_method(s.convert<std::string>(n, name));
        } catch (const ConfigError& e) {
          s.fail(n, name + ": " + e.what());
        }
      });
      s.get("dump_curves", cfg.dump_curves);
      s.get("timing", base.timing);
    }
    {
      auto s = top.child("matern");
      auto& m = base.matern;
      s.get("n", m.n);
      s.get("grid_points", m.grid_points);
      s.get("treat_prob", m.treat_prob);
      read_kernel(s.child("signal"), m.signal, true);
      read_kernel(s.child("noise"), m.noise, false);
      s.get_enum("noise_rule", m.noise_rule, parse_noise_rule);
      s.get("noise_variance", m.noise_variance);
      read_kernel(s.child("corruption"), m.corruption, true);
      s.get("redraw_signal", m.redraw_signal);
      s.get("signal_seed", m.signal_seed);
    }
    {
      auto s = top.child("linear");
      auto& l = base.linear;
      s.get("n", l.n);
      s.get("grid_points", l.grid_points);
      s.get("p", l.p);
      read_kernel(s.child("coefficient"), l.coefficient, true);
      s.get("shift", l.shift);
      s.get("logit_noise_sd", l.logit_noise_sd);
      s.get("outcome_noise_sd", l.outcome_noise_sd);
      s.get("scenario_seed", l.scenario_seed);
      s.get("redraw_coefficients", l.redraw_coefficients);
    }
    {
      auto s = top.child("nuisance");
      auto& n = cfg.nuisance;
      s.get_enum("propensity_model", n.propensity_model, nuisance::parse_propensity_model);
      s.get_enum("outcome_model", n.outcome_model, nuisance::parse_outcome_model);
      s.get_enum("propensity_features", n.propensity_features, nuisance::parse_feature_map);
      s.get_enum("outcome_features", n.outcome_features, nuisance::parse_feature_map);
      s.get("clip_bound", n.clip_bound);
      auto lg = s.child("logistic");
      lg.get("max_iter", n.logistic.max_iter);
      lg.get("tol", n.logistic.tol);
      lg.get("ridge", n.logistic.ridge);
    }
    {
      auto s = top.child("inference");
      s.get("folds", cfg.folds);
      s.get("level", cfg.level);
      s.get("draws", cfg.draws);
    }
  }

  base.nuisance = cfg.nuisance;
  base.folds = cfg.folds;
  base.level = cfg.level;
  base.draws = cfg.draws;
  base.keep_curves = cfg.dump_curves > 0;
  if (cfg.seed) cfg.grid.seed = *cfg.seed;

  try {
    cfg.nuisance.validate();
    if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw ConfigError("inference.level must lie in (0, 1)");
    if (cfg.folds < 2) throw ConfigError("inference.folds must be at least 2");
    if (cfg.draws < 100) throw ConfigError("inference.draws must be at least 100");
    cfg.grid.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

std::string format_config(const RunConfig& cfg) {
  const auto& base = cfg.grid.base;
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  if (cfg.seed) e << YAML::Key << "seed" << YAML::Value << *cfg.seed;

  e << YAML::Key << "simulation" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "dgp" << YAML::Value << std::string(simlab::to_string(base.dgp));
  e << YAML::Key << "replicates" << YAML::Value << cfg.grid.replicates;
  e << YAML::Key << "layout" << YAML::Value << std::string(simlab::to_string(cfg.grid.layout));
  emit_list(e, "alpha_pi", cfg.grid.alpha_pi, [](double v) { return v; });
  emit_list(e, "alpha_mu", cfg.grid.alpha_mu, [](double v) { return v; });
  emit_list(e, "misspecification", cfg.grid.misspecifications,
            [](simlab::Misspecification m) { return std::string(simlab::to_string(m)); });
  emit_list(e, "estimators", base.estimators,
            [](estimators::Method m) { return std::string(estimators::to_string(m)); });
  e << YAML::Key << "dump_curves" << YAML::Value << cfg.dump_curves;
  e << YAML::Key << "timing" << YAML::Value << base.timing;
  e << YAML::EndMap;

  const auto& m = base.matern;
  e << YAML::Key << "matern" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "n" << YAML::Value << m.n;
  e << YAML::Key << "grid_points" << YAML::Value << m.grid_points;
  e << YAML::Key << "treat_prob" << YAML::Value << m.treat_prob;
  emit_kernel(e, "signal", m.signal, true);
  emit_kernel(e, "noise", m.noise, false);
  e << YAML::Key << "noise_rule" << YAML::Value << std::string(to_string(m.noise_rule));
  e << YAML::Key << "noise_variance" << YAML::Value << m.noise_variance;
  emit_kernel(e, "corruption", m.corruption, true);
  e << YAML::Key << "redraw_signal" << YAML::Value << m.redraw_signal;
  e << YAML::Key << "signal_seed" << YAML::Value << m.signal_seed;
  e << YAML::EndMap;

  const auto& l = base.linear;
  e << YAML::Key << "linear" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "n" << YAML::Value << l.n;
  e << YAML::Key << "grid_points" << YAML::Value << l.grid_points;
  e << YAML::Key << "p" << YAML::Value << l.p;
  emit_kernel(e, "coefficient", l.coefficient, true);
  e << YAML::Key << "shift" << YAML::Value << l.shift;
  e << YAML::Key << "logit_noise_sd" << YAML::Value << l.logit_noise_sd;
  e << YAML::Key << "outcome_noise_sd" << YAML::Value << l.outcome_noise_sd;
  e << YAML::Key << "scenario_seed" << YAML::Value << l.scenario_seed;
  e << YAML::Key << "redraw_coefficients" << YAML::Value << l.redraw_coefficients;
  e << YAML::EndMap;

  const auto& n = cfg.nuisance;
  e << YAML::Key << "nuisance" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "propensity_model" << YAML::Value << std::string(nuisance::to_string(n.propensity_model));
  e << YAML::Key << "outcome_model" << YAML::Value << std::string(nuisance::to_string(n.outcome_model));
  e << YAML::Key << "propensity_features" << YAML::Value << std::string(nuisance::to_string(n.propensity_features));
  e << YAML::Key << "outcome_features" << YAML::Value << std::string(nuisance::to_string(n.outcome_features));
  e << YAML::Key << "clip_bound" << YAML::Value << n.clip_bound;
  e << YAML::Key << "logistic" << YAML::Value << YAML::Flow << YAML::BeginMap;
  e << YAML::Key << "max_iter" << YAML::Value << n.logistic.max_iter;
  e << YAML::Key << "tol" << YAML::Value << n.logistic.tol;
  e << YAML::Key << "ridge" << YAML::Value << n.logistic.ridge;
  e << YAML::EndMap << YAML::EndMap;

  e << YAML::Key << "inference" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "folds" << YAML::Value << cfg.folds;
  e << YAML::Key << "level" << YAML::Value << cfg.level;
  e << YAML::Key << "draws" << YAML::Value << cfg.draws;
  e << YAML::EndMap;

  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace drfos::cli
