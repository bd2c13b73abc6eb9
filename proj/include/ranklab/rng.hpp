#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace ranklab {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x00000100000001b3ull;

constexpr std::uint64_t fnv1a64(std::string_view s,
                                std::uint64_t h = kFnvOffsetBasis) noexcept {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                             std::uint64_t h = kFnvOffsetBasis) noexcept {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

// Feeds the 8 bytes of v (little-endian order) into an FNV-1a state.
constexpr std::uint64_t fnv1a64_u64(std::uint64_t v, std::uint64_t h) noexcept {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= kFnvPrime;
  }
  return h;
}

constexpr std::uint64_t fnv1a64_double(double v, std::uint64_t h) noexcept {
  return fnv1a64_u64(std::bit_cast<std::uint64_t>(v), h);
}

// Seeded random stream. Named sub-streams are derived from the base seed, not
// from the current engine state, so derivation is independent of draw order.
// Copying an Rng copies its state: a copy replays the same draws.
//
// uniform()/normal() map engine output to doubles explicitly instead of going
// through <random> distributions, which are implementation-defined; the same
// seed must reproduce the same stream on any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : base_seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t base_seed() const noexcept { return base_seed_; }

  Rng stream(std::string_view name) const {
    return Rng(splitmix64(base_seed_ ^ fnv1a64(name)));
  }

  Rng stream(std::string_view name, std::uint64_t index) const {
    return Rng(splitmix64(base_seed_ ^ fnv1a64(name) ^
                          splitmix64(index ^ 0x5851f42d4c957f2dull)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes exactly two engine draws.
  double normal() {
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Unbiased integer in [0, n), Lemire's multiply-and-reject method.
  std::uint64_t below(std::uint64_t n) {
    unsigned __int128 m =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) *
            static_cast<unsigned __int128>(n);
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Inclusive range.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

 private:
  std::uint64_t base_seed_;
  std::mt19937_64 engine_;
};

// Fixed-width lowercase hex of a 64-bit value; the digest format used by
// checkpoint and dataset checksums.
inline std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return std::string(buf);
}

// Standard normal derived from a hash value alone. Used where noise must be a
// pure function of identity (e.g. per-sample reward jitter) rather than of a
// stream position.
inline double unit_normal_from_hash(std::uint64_t h) {
  const std::uint64_t a = splitmix64(h);
  const std::uint64_t b = splitmix64(h ^ 0x9e3779b97f4a7c15ull);
  const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace ranklab
