#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace mixflow {

// splitmix64; used to derive independent stream seeds from (seed, tags).
uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c = 0);

// Stream tags for deriving independent generators from one master seed.
namespace stream {
inline constexpr uint64_t kInit = 1;
inline constexpr uint64_t kTrain = 2;
inline constexpr uint64_t kSample = 3;
inline constexpr uint64_t kMetric = 4;
inline constexpr uint64_t kData = 5;
}  // namespace stream

// Seeded generator with explicit uniform/normal draws. The normal draw is a
// hand-rolled Box-Muller pair so the byte-level sequence is fixed by this
// code, not by the standard library's unspecified distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(mix_seed(seed, 0x9e3779b97f4a7c15ull)) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n)
  int uniform_int(int n) { return static_cast<int>(uniform() * n); }

  double normal();

  void normal_fill(std::span<double> out) {
    for (double& v : out) v = normal();
  }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace mixflow
