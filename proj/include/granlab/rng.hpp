#pragma once

#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

namespace granlab {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed for a worker or a purpose tag.
constexpr std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index));
}

// Boost distributions are used instead of <random>'s because their output is
// specified by the library rather than the standard library vendor, and the
// ziggurat normal sampler is several times faster.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double normal(double stddev) { return stddev * normal_(engine_); }
  // Uniform on [lo, hi); returns lo when lo == hi.
  double uniform(double lo, double hi) {
    if (!(hi > lo)) return lo;
    return boost::random::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }
  // Uniform integer on [lo, hi].
  long uniform_int(long lo, long hi) {
    return boost::random::uniform_int_distribution<long>(lo, hi)(engine_);
  }
  // Child stream tagged by index; does not advance this stream.
  Rng fork(std::uint64_t index) const { return Rng(split_seed(seed_of_state(), index)); }

  engine_type& engine() { return engine_; }

 private:
  std::uint64_t seed_of_state() const {
    engine_type copy = engine_;
    return copy();
  }

  engine_type engine_;
  boost::random::normal_distribution<double> normal_;
};

}  // namespace granlab
