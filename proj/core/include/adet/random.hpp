#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace adet {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Per-item seed derived from a global seed and an index; the mapping is fixed so
// output never depends on scheduling or worker count.
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index) noexcept;

// Portable random stream. std::mt19937_64 is fully specified by the standard; the
// distributions below are hand-rolled because the std:: ones are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform point on the probability simplex of the given dimension.
  std::vector<double> simplex(std::size_t dimension);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace adet
