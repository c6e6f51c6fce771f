#include "stormsim/wl/workload.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stormsim::wl {

MessageSizeDistribution MessageSizeDistribution::single(
    std::uint32_t cachelines) {
  MessageSizeDistribution d;
  d.bins = {{cachelines, 1.0}};
  return d;
}

MessageSizeDistribution MessageSizeDistribution::small_message_default() {
  MessageSizeDistribution d;
  d.bins = {{1, 0.75}, {2, 0.10}, {4, 0.06}, {8, 0.04},
            {16, 0.03}, {64, 0.015}, {256, 0.005}};
  return d;
}

void MessageSizeDistribution::validate() const {
  if (bins.empty())
    throw std::invalid_argument("message size distribution: empty");
  double sum = 0;
  for (auto& [cl, mass] : bins) {
    if (cl == 0 || mass < 0)
      throw std::invalid_argument("message size distribution: bad bin");
    sum += mass;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("message size distribution: mass != 1");
}

std::uint32_t MessageSizeDistribution::sample(sim::SeededRng& rng) const {
  double u = rng.next_double();
  double acc = 0;
  for (auto& [cl, mass] : bins) {
    acc += mass;
    if (u < acc) return cl;
  }
  return bins.back().first;
}

void WorkloadSpec::validate() const {
  if (n_nodes < 2) throw std::invalid_argument("workload: need >= 2 nodes");
  if (threads_per_node == 0 || coroutines_per_thread == 0)
    throw std::invalid_argument("workload: zero parallelism");
  if (key_count == 0) throw std::invalid_argument("workload: zero keys");
  double s = mix.read_frac + mix.write_frac + mix.insert_frac +
             mix.delete_frac;
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument("workload: op mix fractions must sum to 1");
  sizes.validate();
}

std::vector<std::uint64_t> quota_counts(const OpMix& mix, std::uint64_t total) {
  const double fracs[4] = {mix.read_frac, mix.write_frac, mix.insert_frac,
                           mix.delete_frac};
  std::vector<std::uint64_t> counts(4, 0);
  double rema[4];
  std::uint64_t assigned = 0;
  for (int i = 0; i < 4; ++i) {
    double exact = fracs[i] * static_cast<double>(total);
    counts[i] = static_cast<std::uint64_t>(exact);
    rema[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < total) {
    int best = 0;
    for (int i = 1; i < 4; ++i)
      if (rema[i] > rema[best]) best = i;
    ++counts[best];
    rema[best] = -1;
    ++assigned;
  }
  return counts;
}

std::vector<std::vector<Op>> generate(const WorkloadSpec& spec,
                                      std::uint32_t streams) {
  spec.validate();
  if (streams == 0) throw std::invalid_argument("generate: zero streams");

  sim::SeededRng root(spec.seed);
  std::vector<std::vector<Op>> out(streams);

  const sim::ZipfSampler* zipf = nullptr;
  sim::ZipfSampler zipf_storage(1, 1.0);
  if (spec.key_distribution == KeyDistribution::Zipf) {
    zipf_storage = sim::ZipfSampler(spec.key_count, spec.zipf_theta);
    zipf = &zipf_storage;
  }

  for (std::uint32_t s = 0; s < streams; ++s) {
    std::uint64_t n = spec.op_count / streams +
                      (s < spec.op_count % streams ? 1 : 0);
    sim::SeededRng rng = root.substream(s + 1);
    std::vector<Op> ops;
    ops.reserve(n);

    std::vector<OpKind> kinds;
    kinds.reserve(n);
    auto counts = quota_counts(spec.mix, n);
    for (std::uint64_t i = 0; i < counts[0]; ++i) kinds.push_back(OpKind::Read);
    for (std::uint64_t i = 0; i < counts[1]; ++i) kinds.push_back(OpKind::Write);
    for (std::uint64_t i = 0; i < counts[2]; ++i) kinds.push_back(OpKind::Insert);
    for (std::uint64_t i = 0; i < counts[3]; ++i) kinds.push_back(OpKind::Delete);
    rng.shuffle(kinds);

    for (std::uint64_t i = 0; i < n; ++i) {
      Op op;
      op.kind = kinds[i];
      op.key = zipf ? (zipf->sample(rng) + 1)
                    : rng.next_range(1, spec.key_count);
      op.cachelines = spec.sizes.sample(rng);
      ops.push_back(op);
    }
    out[s] = std::move(ops);
  }
  return out;
}

}  // namespace stormsim::wl
