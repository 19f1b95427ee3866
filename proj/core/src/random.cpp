#include "adet/random.hpp"

#include <cmath>
#include <numbers>

namespace adet {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(global_seed) ^ (index * 0xD1B54A32D192ED03ull + 1));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::index(std::size_t n) {
  if (n <= 1) return 0;
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> Rng::simplex(std::size_t dimension) {
  std::vector<double> w(dimension);
  double total = 0.0;
  for (double& v : w) {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    v = -std::log(u);  // Exp(1) draws normalized give Dirichlet(1, ..., 1).
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace adet
