#pragma once

#include <cstdint>
#include <random>

namespace rfabc {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from (seed, index). Row i of a table,
/// tree t of a forest and node m of a tree each draw from their own stream,
/// so results do not depend on execution order or thread count.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = splitmix64(seed);
  x ^= index + 0x9e3779b97f4a7c15ull + (x << 6) + (x >> 2);
  return splitmix64(x);
}

inline std::uint64_t substream(std::uint64_t seed, std::uint64_t a,
                               std::uint64_t b) {
  return substream(substream(seed, a), b);
}

/// Seeded random source wrapping mt19937_64. Distribution objects are
/// constructed per call so no distribution state leaks between draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Uniform on [0,1).
  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal(double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(engine_);
  }

  double exponential(double rate) {
    return std::exponential_distribution<double>(rate)(engine_);
  }

  long poisson(double mean) {
    return std::poisson_distribution<long>(mean)(engine_);
  }

  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(engine_);
  }

  // Uniform integer on [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rfabc
