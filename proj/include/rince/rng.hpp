#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace rince {

/// Named consumer streams. Each consumer draws from its own stream so adding
/// draws in one module leaves every other module's sequence untouched.
enum class Stream : std::uint64_t {
  kData = 1,
  kInit = 2,
  kAugment = 3,
  kShuffle = 4,
  kRankNoise = 5,
  kAnalysis = 6,
  kProbe = 7,
  kEval = 8,
};

/// Counter-based generator: draw k is a pure function of (key, k), so the
/// sequence is identical on every platform and a cursor fully restores state.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  /// Independent child stream; the parent's counter is not advanced.
  SeededRng split(std::uint64_t tag) const;
  SeededRng split(Stream s) const { return split(static_cast<std::uint64_t>(s)); }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box–Muller; consumes exactly two draws.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  static SeededRng from_cursor(std::uint64_t seed, std::uint64_t key, std::uint64_t counter);

 private:
  SeededRng(std::uint64_t seed, std::uint64_t key, std::uint64_t counter)
      : seed_(seed), key_(key), counter_(counter) {}

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace rince
