#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mscmhmst {

/// FNV-1a, 64 bit. Used for seed derivation and content fingerprints.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Mixes a base seed with a stream name so independent consumers
/// (initialization, shuffling, noise) never share a sequence.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// Seeded generator whose output is identical on every platform.
/// std::mt19937_64 is fully specified; the distributions below are
/// written out because the std:: ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mscmhmst
