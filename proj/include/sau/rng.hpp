#pragma once

#include <cstdint>

#include "sau/tensor.hpp"

namespace sau {

/// Counter-based generator: draw i is splitmix64(key + i * golden), where key is the
/// splitmix64 finalizer applied to the seed. The stream depends only on (seed, i), so
/// it is identical on every platform and can be skipped ahead in O(1).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), key_(mix(seed)) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  void skip(std::uint64_t n) { counter_ += n; }

  std::uint64_t next_u64() { return mix(key_ + (counter_++) * 0x9E3779B97F4A7C15ULL); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  /// Standard normal via Box-Muller, one value per two uniforms.
  double normal();

  /// Independent stream for a sub-task, e.g. one generated sample.
  Rng derive(std::uint64_t index) const { return Rng(seed_ ^ index); }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

template <typename T>
Tensor<T> random_normal(Shape dims, Rng& rng, double stddev = 1.0) {
  Tensor<T> t(std::move(dims));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(stddev * rng.normal());
  return t;
}

template <typename T>
Tensor<T> random_uniform(Shape dims, Rng& rng, double lo, double hi) {
  Tensor<T> t(std::move(dims));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace sau
