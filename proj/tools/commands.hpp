#pragma once

// drfos command implementations. Each returns a process exit code:
// 0 success, 1 usage/config/I-O, 2 data validation, 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace drfos::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

std::string_view version();

struct SimulateOptions {
  std::filesystem::path config;
  std::filesystem::path out_dir = "drfos_out";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

struct EstimateOptions {
  std::filesystem::path data;
  std::filesystem::path config;
  std::filesystem::path out_dir = "drfos_out";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err);
int cmd_estimate(const EstimateOptions& opts, std::ostream& out, std::ostream& err);

/// Full command-line entry point (argument parsing included).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace drfos::cli
