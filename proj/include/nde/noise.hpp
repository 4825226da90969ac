#pragma once
// Counter-based random streams.
//
// Every draw is a pure function of a 64-bit key and a counter, so synthetic
// data, weight initialization and SDE noise are reproducible regardless of
// evaluation order, platform or thread count.

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <string_view>
#include <utility>

namespace nde::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ b);
}

// FNV-1a, used to derive stream keys from string ids and to fingerprint files.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

// A keyed stream of iid draws addressed by counter. `unit`/`uniform`/`below`
// consume one counter each; `normal` consumes counters 2c and 2c+1, so do not
// interleave normal and uniform draws on the same stream.
struct Stream {
  std::uint64_t key = 0;

  Stream() = default;
  explicit Stream(std::uint64_t k) : key(k) {}

  Stream fork(std::uint64_t sub) const { return Stream(mix(key, sub)); }
  Stream fork(std::string_view tag) const { return fork(fnv1a64(tag)); }

  std::uint64_t bits(std::uint64_t counter) const { return mix(key, counter); }

  // uniform on the open interval (0,1); endpoints excluded so logs are safe
  double unit(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1p-53;
  }

  double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * unit(counter);
  }

  // standard normal via Box-Muller
  double normal(std::uint64_t counter) const {
    const double u1 = unit(2 * counter);
    const double u2 = unit(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // integer in [0, n), n >= 1
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
  }
};

// Deterministic Fisher-Yates (std::shuffle is implementation-defined).
template <class Vec>
void shuffle(Vec& v, Stream s) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(s.below(i, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace nde::rng
