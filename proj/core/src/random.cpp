#include "perfpred/random.hpp"

#include <stdexcept>

namespace perfpred {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Stream::Stream(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

Stream Stream::child(std::uint64_t key) const {
  return Stream(mix64(seed_ ^ mix64(key + 0x632be59bd9b4e019ULL)));
}

double Stream::normal(double mean, double sd) {
  if (sd == 0.0) return mean;
  return mean + sd * std_normal_(engine_);
}

double Stream::uniform(double lo, double hi) {
  if (lo == hi) return lo;
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine_);
}

bool Stream::bernoulli(double p) {
  std::bernoulli_distribution dist(p);
  return dist(engine_);
}

std::size_t Stream::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Stream::index: empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

}  // namespace perfpred
