#pragma once

#include <cstdint>
#include <vector>

#include "stormsim/sim/rng.hpp"

namespace stormsim::wl {

enum class WorkloadKind : std::uint8_t {
  KvLookups,
  TatpLite,
  SyncMirroring,
  RandomReads,
};

enum class KeyDistribution : std::uint8_t { Uniform, Zipf };

struct OpMix {
  double read_frac = 0.80;
  double write_frac = 0.16;
  double insert_frac = 0.02;
  double delete_frac = 0.02;
};

/// Histogram over message sizes in cachelines. The default places 75%
/// of the mass on single-cacheline messages.
struct MessageSizeDistribution {
  std::vector<std::pair<std::uint32_t, double>> bins;

  static MessageSizeDistribution single(std::uint32_t cachelines);
  static MessageSizeDistribution small_message_default();
  std::uint32_t sample(sim::SeededRng& rng) const;
  void validate() const;
};

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::KvLookups;
  std::uint32_t n_nodes = 2;
  std::uint32_t threads_per_node = 1;
  std::uint32_t coroutines_per_thread = 8;
  std::uint64_t key_count = 10000;
  KeyDistribution key_distribution = KeyDistribution::Uniform;
  double zipf_theta = 0.99;
  std::uint64_t op_count = 10000;
  std::uint64_t seed = 1;
  OpMix mix;
  MessageSizeDistribution sizes = MessageSizeDistribution::single(1);

  void validate() const;
};

enum class OpKind : std::uint8_t { Read, Write, Insert, Delete };

struct Op {
  OpKind kind = OpKind::Read;
  std::uint64_t key = 0;
  std::uint32_t cachelines = 1;
};

/// Deterministic per-coroutine op streams. Mix fractions are realized
/// exactly by quota sampling (fixed per-kind counts, shuffled), not by
/// independent draws.
std::vector<std::vector<Op>> generate(const WorkloadSpec& spec,
                                      std::uint32_t streams);

/// Exact per-kind counts for `total` ops under the mix (largest
/// remainder rounding); the test oracle for the generator.
std::vector<std::uint64_t> quota_counts(const OpMix& mix, std::uint64_t total);

}  // namespace stormsim::wl
