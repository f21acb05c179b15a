#pragma once

#include <cstdint>
#include <limits>

#include <boost/random/mersenne_twister.hpp>

namespace treepop {

/// Reproducible random stream keyed by (seed, stream_id).
///
/// The engine is a 64-bit Mersenne Twister seeded from a SplitMix64 hash of
/// both keys, so distinct stream ids give statistically independent streams
/// and a key pair replays the same sequence on every platform. All variates
/// are drawn through Boost.Random distributions, whose algorithms do not vary
/// between standard library implementations.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  result_type operator()() { return engine_(); }
  static constexpr result_type min() { return std::numeric_limits<result_type>::min(); }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  double gamma(double shape);
  double beta(double a, double b);
  /// Uniform integer on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  boost::random::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Derives a child seed from a parent seed and a key.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key);

}  // namespace treepop
