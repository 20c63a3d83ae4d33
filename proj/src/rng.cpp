#include "mixflow/rng.hpp"

#include <cmath>
#include <numbers>

namespace mixflow {

static uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  uint64_t state = a;
  uint64_t z = splitmix64(state);
  state ^= b + 0x9e3779b97f4a7c15ull;
  z ^= splitmix64(state);
  state ^= c + 0xbf58476d1ce4e5b9ull;
  z ^= splitmix64(state);
  return z;
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

}  // namespace mixflow
