#include "rince/rng.hpp"

#include <cmath>
#include <numbers>

namespace rince {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), key_(mix64(seed + kGolden)), counter_(0) {}

SeededRng SeededRng::split(std::uint64_t tag) const {
  return SeededRng(seed_, mix64(key_ ^ mix64(tag * kGolden + 0x632BE59BD9B4E019ULL)), 0);
}

SeededRng SeededRng::from_cursor(std::uint64_t seed, std::uint64_t key, std::uint64_t counter) {
  return SeededRng(seed, key, counter);
}

std::uint64_t SeededRng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double SeededRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double SeededRng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

}  // namespace rince
