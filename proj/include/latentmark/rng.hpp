#pragma once

// PCG64 (128-bit LCG state, XSL-RR 64-bit output) plus the normal-deviate
// transform used everywhere in the library.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace latentmark {

using uint128 = unsigned __int128;

constexpr uint128 make_u128(std::uint64_t hi, std::uint64_t lo) {
  return (static_cast<uint128>(hi) << 64) | lo;
}

inline constexpr uint128 kPcgMultiplier =
    make_u128(0x2360ED051FC65DA4ULL, 0x4385DF649FCCF645ULL);
inline constexpr uint128 kPcgDefaultIncrement =
    make_u128(0x5851F42D4C957F2DULL, 0x14057B7EF767814FULL);

/// Generator state. Identical (state, increment) pairs produce identical
/// streams. The increment must be odd.
struct RngState {
  uint128 state = 0;
  uint128 increment = kPcgDefaultIncrement;

  friend bool operator==(const RngState&, const RngState&) = default;

  /// Advances the LCG, then applies the XSL-RR output permutation to the
  /// new state.
  std::uint64_t next_u64() {
    state = state * kPcgMultiplier + increment;
    const auto hi = static_cast<std::uint64_t>(state >> 64);
    const auto lo = static_cast<std::uint64_t>(state);
    const unsigned rot = static_cast<unsigned>(hi >> 58);
    const std::uint64_t x = hi ^ lo;
    return (x >> rot) | (x << ((64u - rot) & 63u));
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) by rejection; bound > 0.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  /// Deterministic child stream. Used to split one master seed
  /// hierarchically: derive(master, {trial, role}) never depends on how
  /// many draws other streams consumed.
  static RngState derive(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t a = splitmix(master);
    std::uint64_t b = splitmix(a ^ 0xD1B54A32D192ED03ULL);
    for (const std::uint64_t p : path) {
      a = splitmix(a ^ splitmix(p + 0x9E3779B97F4A7C15ULL));
      b = splitmix(b + a);
    }
    RngState s;
    s.state = make_u128(a, b);
    s.increment = make_u128(splitmix(a + b), splitmix(b ^ 0x5851F42D4C957F2DULL)) | 1u;
    return s;
  }

  static RngState from_seed(std::uint64_t seed) { return derive(seed, {}); }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }
};

/// Polar Box-Muller. Each accepted pair (v1, v2) yields v1*f first, then
/// v2*f. Rejected pairs consume two draws each.
class NormalStream {
 public:
  explicit NormalStream(RngState& rng) : rng_(rng) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double v1, v2, s;
    do {
      v1 = 2.0 * rng_.next_unit() - 1.0;
      v2 = 2.0 * rng_.next_unit() - 1.0;
      s = v1 * v1 + v2 * v2;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v2 * f;
    has_spare_ = true;
    return v1 * f;
  }

 private:
  RngState& rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace latentmark
