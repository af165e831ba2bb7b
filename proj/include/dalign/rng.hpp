#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <utility>

namespace dalign {

/// xoshiro256** generator seeded through splitmix64. Child streams are
/// derived from (seed, label), so adding a new consumer never shifts the
/// draws seen by existing ones.
///
/// All distributions are implemented here rather than through <random>
/// so that streams are identical across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  Rng stream(std::string_view label) const;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  result_type operator()() { return next_u64(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  // [0, 1)
  double uniform();
  // (0, 1), never exactly 0 or 1.
  double uniform_open();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
};

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(items[i - 1], items[j]);
  }
}

// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the
// Gamma(shape + 1) * U^(1/shape) boost.
double sample_gamma(Rng& rng, double shape);
// log of a Gamma(shape, 1) draw. Stays finite for tiny shapes where the
// boosted draw underflows.
double sample_log_gamma(Rng& rng, double shape);
// Symmetric Beta(alpha, alpha) as G1 / (G1 + G2).
double sample_beta(Rng& rng, double alpha);

}  // namespace dalign
