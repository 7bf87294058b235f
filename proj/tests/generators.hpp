#pragma once

// Seeded value generators for property tests.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace gen {

class Source {
 public:
  explicit Source(std::uint64_t seed) : engine_(seed) {}

  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::size_t integer(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(engine_); }

  std::vector<double> reals(std::size_t n, double lo, double hi) {
    std::vector<double> out(n);
    for (auto& v : out) v = real(lo, hi);
    return out;
  }
  /// Values with magnitude in [lo, hi] and random sign; keeps relu inputs off the kink.
  std::vector<double> away_from_zero(std::size_t n, double lo, double hi) {
    std::vector<double> out(n);
    for (auto& v : out) v = (coin() ? 1.0 : -1.0) * real(lo, hi);
    return out;
  }
  /// Distinct odd kernel sizes, sorted ascending.
  std::vector<int> odd_scales(std::size_t max_count, int max_size) {
    std::vector<int> pool;
    for (int k = 1; k <= max_size; k += 2) pool.push_back(k);
    std::shuffle(pool.begin(), pool.end(), engine_);
    pool.resize(integer(1, std::min(max_count, pool.size())));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gen
