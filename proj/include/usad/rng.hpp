#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace usad {

// Deterministic random source. All distributions are implemented by hand on
// top of mt19937_64 so that streams are identical across platforms and
// standard-library versions (std::normal_distribution is not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), root_seed_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  // Standard normal via Box-Muller. The spare value is cached, so a stream of
  // normals consumes one uniform pair per two values.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derive an independent child stream. Children with distinct purpose tags
  // never share state with the parent or each other.
  Rng child(std::uint64_t purpose) const {
    std::uint64_t x = root_seed_ + 0x9e3779b97f4a7c15ULL * (purpose + 1);
    // splitmix64 finalizer
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return Rng(x);
  }

  std::uint64_t root_seed() const { return root_seed_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t root_seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace usad
