#pragma once

#include <cstdint>
#include <utility>

#include <cmath>

namespace otseg {

// Counter-based randomness: every draw is a pure hash of (seed, stream, step, slot),
// so results are independent of evaluation order and identical across platforms.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                                  std::uint64_t slot) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ step);
  h = splitmix64(h ^ slot);
  return h;
}

// [0,1)
inline double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// (0,1), safe inside log
inline double to_unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal pair via Box-Muller from two uniform draws.
inline std::pair<double, double> box_muller(std::uint64_t bits1, std::uint64_t bits2) {
  const double u1 = to_unit_open(bits1);
  const double u2 = to_unit(bits2);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * 3.14159265358979323846 * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

// Uniform index in [0, n): 64-bit hash reduced by modulo (bias ~ n / 2^64).
inline std::uint64_t bounded(std::uint64_t bits, std::uint64_t n) { return bits % n; }

} // namespace otseg
