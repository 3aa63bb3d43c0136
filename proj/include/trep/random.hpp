#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace trep {

/// SplitMix64 generator. Every random draw in the library goes through this
/// type so that outputs are identical across compilers and standard
/// libraries (std:: distributions are implementation-defined).
///
///   state += 0x9e3779b97f4a7c15
///   z = state
///   z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9
///   z = (z ^ (z >> 27)) * 0x94d049bb133111eb
///   return z ^ (z >> 31)
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling, unbiased for any n.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Independent substream keyed by `key`; used to give every image, point
  /// or task its own reproducible sequence regardless of processing order.
  SplitMix64 fork(std::uint64_t key) const {
    SplitMix64 mixer(state_ ^ (key * 0xd1b54a32d192ed03ULL));
    return SplitMix64(mixer.next());
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// Fisher-Yates shuffle driven by SplitMix64.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace trep
