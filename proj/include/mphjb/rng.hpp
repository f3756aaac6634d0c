#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mphjb::rng {

// Counter-based generation: every draw is a pure function of its key, so any
// (time step, path, coordinate) can be generated independently and in any order.

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                                 std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc908ULL);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return splitmix64(h ^ c);
}

/// Uniform in (0, 1].
inline double to_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal keyed by (seed, stream, a, b, coord). Coordinates 2i and
/// 2i+1 are the two Box-Muller outputs of one uniform pair.
inline double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b,
                     std::uint64_t coord) {
  const std::uint64_t pair = coord >> 1;
  const std::uint64_t h = hash_key(seed, stream, a, b, pair);
  const double u1 = to_unit(h);
  const double u2 = to_unit(splitmix64(h ^ 0xa54ff53a5f1d36f1ULL));
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (coord & 1U) ? r * std::sin(angle) : r * std::cos(angle);
}

/// Uniform in (0, 1] keyed like normal().
inline double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b,
                      std::uint64_t c) {
  return to_unit(hash_key(seed, stream, a, b, c));
}

/// Uniform integer in [0, n) keyed like normal().
inline std::uint64_t index(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                           std::uint64_t b, std::uint64_t n) {
  const double u = to_unit(hash_key(seed, stream, a, b, 0));
  const auto i = static_cast<std::uint64_t>((1.0 - u) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

/// Stream tags keep independent uses of one seed apart.
enum Stream : std::uint64_t {
  kIncrements = 1,
  kInitialState = 2,
  kStateSubsample = 3,
  kIncrementSubsample = 4,
  kProbe = 5,
};

}  // namespace mphjb::rng
