#include "dalign/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dalign {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : state_) s = splitmix64(x);
}

Rng Rng::stream(std::string_view label) const {
  std::uint64_t mixed = seed_ ^ fnv1a(label);
  return Rng(splitmix64(mixed));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
  // Lemire's multiply-shift with rejection for exact uniformity.
  const std::uint64_t bound = n;
  std::uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

double Rng::normal() {
  // Marsaglia polar method, one value per call.
  while (true) {
    const double u = 2.0 * uniform() - 1.0;
    const double v = 2.0 * uniform() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

namespace {

double marsaglia_tsang(Rng& rng, double shape) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

void check_shape(double shape) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw std::invalid_argument("gamma/beta shape must be finite and positive");
  }
}

}  // namespace

double sample_gamma(Rng& rng, double shape) {
  check_shape(shape);
  if (shape >= 1.0) return marsaglia_tsang(rng, shape);
  const double g = marsaglia_tsang(rng, shape + 1.0);
  return g * std::pow(rng.uniform_open(), 1.0 / shape);
}

double sample_log_gamma(Rng& rng, double shape) {
  check_shape(shape);
  if (shape >= 1.0) return std::log(marsaglia_tsang(rng, shape));
  const double g = marsaglia_tsang(rng, shape + 1.0);
  return std::log(g) + std::log(rng.uniform_open()) / shape;
}

double sample_beta(Rng& rng, double alpha) {
  check_shape(alpha);
  if (alpha >= 1.0) {
    const double g1 = marsaglia_tsang(rng, alpha);
    const double g2 = marsaglia_tsang(rng, alpha);
    return g1 / (g1 + g2);
  }
  const double l1 = sample_log_gamma(rng, alpha);
  const double l2 = sample_log_gamma(rng, alpha);
  // G1 / (G1 + G2) = 1 / (1 + exp(l2 - l1))
  const double diff = l2 - l1;
  if (diff > 700.0) return 0.0;
  return 1.0 / (1.0 + std::exp(diff));
}

}  // namespace dalign
