#pragma once

#include <cmath>
#include <cstdint>

namespace fogsight {

// SplitMix64. Chosen over <random> engines+distributions because the
// distributions are implementation-defined and runs must reproduce across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t state() const { return state_; }

  // Derives an independent stream from (seed, a, b) so that per-step
  // randomness does not depend on how many draws earlier steps made.
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    Rng mix(seed ^ 0x5DEECE66DULL);
    std::uint64_t s = mix.next_u64();
    s ^= Rng(a + 0x632BE59BD9B4E019ULL).next_u64();
    s ^= Rng(b + 0x2545F4914F6CDD1DULL).next_u64() * 3;
    return Rng(s);
  }

 private:
  std::uint64_t state_;
};

}  // namespace fogsight
