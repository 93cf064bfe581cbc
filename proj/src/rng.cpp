#include "drfos/rng.hpp"

#include <stdexcept>
#include <utility>

namespace drfos {

namespace {

std::mt19937_64 seeded_engine(const std::vector<std::uint64_t>& path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * path.size());
  for (auto key : path) {
    words.push_back(static_cast<std::uint32_t>(key & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(key >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : Rng(std::vector<std::uint64_t>{seed}) {}

Rng::Rng(std::vector<std::uint64_t> path) : path_(std::move(path)), engine_(seeded_engine(path_)) {}

Rng Rng::derive(std::uint64_t key) const {
  auto path = path_;
  path.push_back(key);
  return Rng(std::move(path));
}

Rng Rng::derive(std::initializer_list<std::uint64_t> keys) const {
  auto path = path_;
  path.insert(path.end(), keys.begin(), keys.end());
  return Rng(std::move(path));
}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform() { return unit_(engine_); }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

bool Rng::bernoulli(double p) { return uniform() < p; }

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::below: bound must be positive");
  return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(engine_);
}

}  // namespace drfos
