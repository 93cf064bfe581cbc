#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace drfos {

/// Seedable, stream-splittable random source.
///
/// The engine is `std::mt19937_64` seeded through `std::seed_seq` with the
/// full key path (root seed followed by every derivation key), so
/// `Rng(7).derive(3).derive(1)` always yields the same stream and distinct
/// paths yield statistically independent streams. Derivation never advances
/// the parent, which is what lets parallel workers reproduce serial output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Child stream keyed by `key`; the parent state is untouched.
  [[nodiscard]] Rng derive(std::uint64_t key) const;
  [[nodiscard]] Rng derive(std::initializer_list<std::uint64_t> keys) const;

  double normal();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  bool bernoulli(double p);
  /// Uniform integer on [0, bound).
  std::uint64_t below(std::uint64_t bound);

  std::mt19937_64& engine() { return engine_; }
  const std::vector<std::uint64_t>& key_path() const { return path_; }

 private:
  explicit Rng(std::vector<std::uint64_t> path);

  std::vector<std::uint64_t> path_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

// Well-known stream keys so call sites stay readable.
namespace streams {
inline constexpr std::uint64_t kSignal = 0x5167;
inline constexpr std::uint64_t kTreatment = 0x7472;
inline constexpr std::uint64_t kNoise = 0x6e6f;
inline constexpr std::uint64_t kCorruptPropensity = 0x6370;
inline constexpr std::uint64_t kCorruptOutcome = 0x636d;
inline constexpr std::uint64_t kCovariates = 0x6376;
inline constexpr std::uint64_t kFolds = 0x666f;
inline constexpr std::uint64_t kBootstrap = 0x6273;
inline constexpr std::uint64_t kScenario = 0x7363;
}  // namespace streams

}  // namespace drfos
