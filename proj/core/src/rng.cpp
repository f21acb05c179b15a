#include "treepop/rng.hpp"

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace treepop {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  return splitmix64(splitmix64(seed) ^ splitmix64(key + 0x632be59bd9b4e019ULL));
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_{seed}, stream_id_{stream_id}, engine_{derive_seed(seed, stream_id)} {}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  return boost::random::normal_distribution<double>{}(engine_);
}

double RngStream::gamma(double shape) {
  return boost::random::gamma_distribution<double>{shape}(engine_);
}

double RngStream::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  return boost::random::uniform_int_distribution<std::int64_t>{lo, hi}(engine_);
}

}  // namespace treepop
