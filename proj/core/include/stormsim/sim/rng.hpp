#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace stormsim::sim {

/// Deterministic random source. The generator core is std::mt19937_64
/// (bit-exact across platforms per the standard); every distribution is
/// implemented here by hand because the standard library's distribution
/// classes are implementation-defined and would break byte-identical
/// replays.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : gen_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, bound). bound > 0.
  std::uint64_t next_below(std::uint64_t bound);

  /// Uniform in [lo, hi] inclusive.
  std::uint64_t next_range(std::uint64_t lo, std::uint64_t hi) {
    return lo + next_below(hi - lo + 1);
  }

  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Fisher-Yates shuffle using this generator (std::shuffle is
  /// implementation-defined and not reproducible).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Derive an independent substream; identical (seed, tag) pairs yield
  /// identical streams regardless of what other streams consumed.
  SeededRng substream(std::uint64_t tag) const;

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_;
};

/// Zipf(theta) sampler over [0, n) with a precomputed CDF.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double theta);
  std::size_t sample(SeededRng& rng) const;

 private:
  std::vector<double> cdf_;
};

}  // namespace stormsim::sim
