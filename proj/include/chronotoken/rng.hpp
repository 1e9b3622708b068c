#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace chronotoken {

// SplitMix64 generator. The standard library distributions are
// implementation-defined, so all sampling in the project goes through this
// class to keep datasets and training runs reproducible across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; both branches evaluated so the draw count per call is fixed.
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Exponential with the given mean.
  double exponential(double mean) {
    double u;
    do {
      u = uniform();
    } while (u >= 1.0);
    return -mean * std::log1p(-u);
  }

  // Normal truncated to two standard deviations, then scaled.
  double trunc_normal(double sd) {
    double z = normal();
    while (std::abs(z) > 2.0) z = normal();
    return z * sd;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_u64() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  static uint64_t hash64(uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdull;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ull;
    x ^= x >> 33;
    return x;
  }

  // Derives an independent stream for (seed, stream, index); used to hand
  // each synthetic encounter and each dropout mask its own generator.
  static uint64_t mix(uint64_t seed, uint64_t stream, uint64_t index) {
    return hash64(hash64(seed ^ hash64(stream)) ^ hash64(index + 0x51ed2701));
  }

  static constexpr double kTwoPi = 6.283185307179586476925286766559;

 private:
  uint64_t state_;
};

}  // namespace chronotoken
