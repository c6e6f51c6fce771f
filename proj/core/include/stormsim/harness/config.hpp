#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "stormsim/nic/config.hpp"
#include "stormsim/wl/workload.hpp"

namespace stormsim::harness {

enum class ExperimentKind : std::uint8_t {
  KvLookups,
  Tatp,
  SyncMirroring,
  RandomReads,
  Emulation,
};

const char* to_string(ExperimentKind k);

/// Parsed and schema-validated experiment description. Unknown sections
/// or keys are rejected with the offending line number.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::KvLookups;
  std::uint64_t seed = 1;
  std::string preset_path;
  nic::NicConfig nic;

  std::uint32_t nodes = 2;
  std::uint32_t threads_per_node = 1;
  std::uint32_t coroutines_per_thread = 8;
  std::uint32_t virtual_machines = 0;

  std::uint64_t key_count = 10000;
  std::uint32_t bucket_width = 1;
  std::uint32_t value_bytes = 104;
  double occupancy_target = 0.6;
  bool rpc_only = false;
  bool farm_mode = false;

  std::uint64_t op_count = 20000;
  wl::KeyDistribution distribution = wl::KeyDistribution::Uniform;
  double zipf_theta = 0.99;
  wl::OpMix mix;
  std::uint32_t message_cachelines = 1;  // 0: small-message histogram
  std::uint32_t connections = 8;
  std::uint64_t data_bytes = 20ull << 30;
  double warmup_frac = 0.1;

  std::string results_path;  // empty: stdout
};

ExperimentConfig parse_config(const std::string& text,
                              const std::string& origin);
ExperimentConfig load_config(const std::string& path);

}  // namespace stormsim::harness
