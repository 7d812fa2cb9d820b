#pragma once

#include <cmath>
#include <cstdint>

namespace mrtherm {

/// SplitMix64; used both as a standalone generator and to derive
/// per-role seeds from one master seed. Reference: Steele et al.,
/// "Fast splittable pseudorandom number generators".
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Hand-rolled so streams are
  /// bit-reproducible across standard libraries.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Seed-splitting scheme: every consumer of randomness draws its seed as
/// derive_seed(master, role, index). Roles are stable small constants so a
/// rerun with the same master seed replays every stream exactly.
enum class SeedRole : std::uint64_t {
  TruthNoise = 1,   // index = noise realization
  PoissonDarts = 2, // index = requested line count
  ParameterDraw = 3 // index = 0
};

inline std::uint64_t derive_seed(std::uint64_t master, SeedRole role, std::uint64_t index) {
  SplitMix64 g(master ^ (static_cast<std::uint64_t>(role) * 0xA24BAED4963EE407ULL) ^
               (index * 0x9FB21C651E98DF25ULL));
  return g.next();
}

} // namespace mrtherm
