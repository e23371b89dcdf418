#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fem::nd {

/// Deterministic RNG. mt19937_64 is fully specified by the standard and the
/// mappings below avoid std::*_distribution, whose output sequences are
/// implementation-defined; results are therefore stable across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t raw() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via the polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, w, s;
    do {
      u = 2.0 * uniform() - 1.0;
      w = 2.0 * uniform() - 1.0;
      s = u * u + w * w;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = w * f;
    has_spare_ = true;
    return u * f;
  }

  /// Uniform integer in [0, n), rejection-free for the common case.
  int uniform_int(int n) {
    const uint64_t bound = static_cast<uint64_t>(n);
    uint64_t x = raw();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo < bound) {
      const uint64_t threshold = (-bound) % bound;
      while (lo < threshold) {
        x = raw();
        m = static_cast<__uint128_t>(x) * bound;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<int>(m >> 64);
  }

  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (int i = static_cast<int>(xs.size()) - 1; i > 0; --i) {
      std::swap(xs[i], xs[uniform_int(i + 1)]);
    }
  }

  /// Derives an independent stream id from two seeds (splitmix64 finalizer).
  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fem::nd
