#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string_view>

namespace uds {

// Seeding discipline ("uds-rng-v1"): one master seed fans out to named
// substreams, so changing e.g. the selection policy cannot perturb corpus
// generation or batch order. Substream seeds are derived by hashing the
// stream name (FNV-1a) into the master seed through splitmix64.
inline constexpr std::string_view kRngVersion = "uds-rng-v1";

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t substream_seed(std::uint64_t master, std::string_view stream) {
  return splitmix64(master ^ splitmix64(fnv1a64(stream)));
}

// mt19937_64 with the draw algorithms spelled out (std::uniform_*_distribution
// output is implementation-defined and would not reproduce across standard
// libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  Rng(std::uint64_t master, std::string_view stream)
      : gen_(substream_seed(master, stream)) {}

  std::uint64_t next() { return gen_(); }

  // uniform in [0, 1) with 53 random bits
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n), rejection sampled to avoid modulo bias
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

  // Rademacher +-1
  double sign() { return (next() & 1ull) ? 1.0 : -1.0; }

  // standard normal, Box-Muller without a cached spare so every call
  // consumes a fixed number of draws
  double gauss() {
    double u1 = unit();
    while (u1 == 0.0) u1 = unit();
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace uds
