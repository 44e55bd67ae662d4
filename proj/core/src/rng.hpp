#pragma once

// Portable random streams. Boost.Random distributions use fixed algorithms,
// so a seed produces the same draws on every platform (unlike <random>'s
// distributions, whose algorithms are implementation-defined).

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <cstdint>

namespace overlapsim::detail {

// SplitMix64 finalizer; used to derive independent seeds from (seed, tag).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return boost::random::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform01() { return boost::random::uniform_01<double>()(engine_); }
  double gamma(double shape) {
    return boost::random::gamma_distribution<double>(shape, 1.0)(engine_);
  }
  std::size_t index(std::size_t n) {
    return boost::random::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

 private:
  boost::random::mt19937_64 engine_;
};

}  // namespace overlapsim::detail
