#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace batchens {

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard, and all distributions are derived
// from raw engine bits in-house so draws are bit-identical across platforms
// and standard library versions.
//
// Independent substreams are derived per purpose: stream("init") and
// stream("shuffle") from the same root seed never share state, so weight
// initialization and data shuffling stay reproducible independently.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

  uint64_t seed() const { return seed_; }

  // Derived generator seeded from (seed, purpose). Splitting is stable:
  // the same purpose string always yields the same substream.
  Rng stream(std::string_view purpose) const;

  uint64_t bits() { return engine_(); }

  // Uniform on [0,1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes two uniforms per draw.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n). n must be positive.
  uint64_t below(uint64_t n);

  // Fisher-Yates; in-house so the permutation sequence is pinned.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace batchens
