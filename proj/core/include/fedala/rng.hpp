#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace fedala {

// Mixes a base seed with stream tags into an independent 64-bit seed
// (splitmix64 finalizer chained over the tags).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

// Tags for derive_seed. Values are part of the reproducibility contract.
enum class Stream : std::uint64_t {
  kSynthetic = 1,
  kPartition = 2,
  kSplit = 3,
  kModelInit = 4,
  kClientSampling = 5,
  kLocalTrain = 6,
  kAlaSample = 7,
  kFinetune = 8,
};

inline std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

// Seeded generator whose every draw is defined here rather than by the
// standard library's distributions, so runs are bit-reproducible across
// toolchains. std::mt19937_64 output itself is fully specified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal (Marsaglia polar method).
  double normal();

  // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 uses the power boost.
  double gamma(double shape);

  // One draw from Dir(alpha * 1_n).
  std::vector<double> dirichlet(double alpha, std::size_t n);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    shuffle(std::span<T>(values));
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace fedala
