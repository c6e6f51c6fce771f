#include "stormsim/sim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stormsim::sim {

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t SeededRng::next_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("next_below: bound == 0");
  // Rejection sampling to avoid modulo bias; the loop almost never runs
  // more than once for the small bounds used here.
  std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return x % bound;
}

SeededRng SeededRng::substream(std::uint64_t tag) const {
  return SeededRng(splitmix64(seed_ ^ splitmix64(tag)));
}

ZipfSampler::ZipfSampler(std::size_t n, double theta) {
  if (n == 0) throw std::invalid_argument("zipf: n == 0");
  cdf_.resize(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += 1.0 / std::pow(static_cast<double>(i + 1), theta);
    cdf_[i] = sum;
  }
  for (auto& c : cdf_) c /= sum;
}

std::size_t ZipfSampler::sample(SeededRng& rng) const {
  double u = rng.next_double();
  auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return static_cast<std::size_t>(it - cdf_.begin());
}

}  // namespace stormsim::sim
