#pragma once

// Run configuration for the drfos command-line tool. Config files are YAML
// documents with nested sections; every key is optional and falls back to
// the documented default (see `default_config_text`).

#include "drfos/nuisance.hpp"
#include "drfos/simlab.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace drfos::cli {

struct RunConfig {
  /// Master seed. Required by `simulate` (config key or --seed).
  std::optional<std::uint64_t> seed;

  // simulate
  simlab::GridSpec grid{};
  /// Curve dumps (JSON) written for the first `dump_curves` seeds of each cell.
  std::size_t dump_curves = 0;

  // estimate, and the learners of linear simulation scenarios
  nuisance::NuisanceModelSpec nuisance{};
  std::size_t folds = 5;
  double level = 0.95;
  std::size_t draws = 2000;
};

/// Parses a config document. Errors are ConfigError naming `source` and the
/// offending line.
RunConfig parse_config(std::string_view text, std::string_view source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Canonical YAML rendering of every effective setting; its hash identifies a
/// run in the manifest.
std::string format_config(const RunConfig& cfg);

/// The shipped defaults file, with comments.
std::string_view default_config_text();

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace drfos::cli
