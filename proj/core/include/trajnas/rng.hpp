#pragma once

#include <cmath>
#include <cstdint>

namespace trajnas {

// splitmix64 finalizer (Vigna). Used both as a seed mixer and as the core of
// the engine below so that every random draw in the project is reproducible
// from explicit 64-bit seeds, independent of the C++ standard library's
// distribution implementations.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from (seed, stream). All deterministic
// sub-seeding in the project (per-scene, per-iteration, per-agent) goes
// through this one function.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
}

// Counter-based splitmix64 generator. Stateless apart from the counter, so
// sequences are identical on every platform and never depend on call-site
// distribution objects.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // Uniform integer in [0, n). Lemire multiply-shift; bias is < n / 2^64.
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform_range(double lo, double hi) {
    return lo + (hi - lo) * uniform_double();
  }

  // Standard normal via Box-Muller. Draws two uniforms per call (the second
  // sample is discarded) so consumption per call is fixed.
  double normal() {
    double u1 = uniform_double();
    double u2 = uniform_double();
    // Avoid log(0).
    while (u1 <= 0.0) u1 = uniform_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::uint64_t state_;
};

}  // namespace trajnas
