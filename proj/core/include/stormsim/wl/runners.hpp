#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stormsim/dp/dataplane.hpp"
#include "stormsim/kv/hash_table.hpp"
#include "stormsim/nic/config.hpp"
#include "stormsim/tx/txengine.hpp"
#include "stormsim/wl/workload.hpp"

namespace stormsim::wl {

struct StoreEntry {
  std::uint64_t key = 0;
  std::uint64_t version = 0;
  std::vector<std::uint8_t> value;
};

struct RunMetrics {
  std::uint64_t ops = 0;            // measured ops (post-warmup)
  std::uint64_t total_ops = 0;      // including warmup
  sim::SimTime duration_ns = 0;     // measured window
  double throughput_ops_per_us_per_machine = 0;
  std::uint64_t p50_latency_ns = 0;
  std::uint64_t p99_latency_ns = 0;
  double abort_rate = 0;
  double cache_hit_rate = 0;
  dp::PathCounters paths;
  std::uint32_t node_count = 0;
  std::uint64_t connections = 0;
  // Exact-integer four-bucket attribution over all one-sided ops.
  nic::LatencyBreakdown bucket_sums;
  std::uint64_t bucket_ops = 0;
  std::vector<tx::TxRecord> tx_records;
  std::string event_log;
  // Transactional runs: store state for the serializability oracle.
  std::vector<StoreEntry> initial_store;
  std::vector<StoreEntry> final_store;
  std::map<std::uint64_t, std::uint64_t> version_floors;
  std::uint64_t leaked_locks = 0;
};

struct KvRunConfig {
  nic::NicConfig nic;
  WorkloadSpec spec;
  kv::TableConfig table;
  double occupancy_target = 0.6;
  bool rpc_only = false;
  std::uint32_t virtual_machines = 0;  // 0: equal to n_nodes
  double warmup_frac = 0.1;
  bool capture_event_log = false;
};

/// Key-value lookups over the distributed hash table (no transactions).
RunMetrics run_kv_lookups(const KvRunConfig& cfg);

/// TATP-lite transaction mix over Storm transactions.
RunMetrics run_tatp(const KvRunConfig& cfg);

struct RandomReadsConfig {
  nic::NicConfig nic;
  std::uint32_t connections = 8;
  std::uint64_t data_bytes = 20ull << 30;
  std::uint64_t page_size = 2ull << 20;
  std::uint64_t warmup_ops = 60000;
  std::uint64_t measure_ops = 120000;
  std::uint32_t max_depth_per_conn = 128;
  std::uint32_t min_depth_per_conn = 16;
  std::uint32_t total_outstanding_budget = 16384;
  std::uint32_t read_bytes = 64;
  std::uint64_t seed = 1;
};

/// Saturated random remote reads between two nodes; returns sustained
/// reads per microsecond at the initiator.
double run_random_reads(const RandomReadsConfig& cfg);

/// Throughput drop across a connection sweep: 1 - T(hi)/T(lo).
double connection_scaling_drop(const nic::NicConfig& nic, std::uint32_t lo,
                               std::uint32_t hi);

struct MirroringRecord {
  std::uint32_t cachelines;
  nic::LatencyBreakdown breakdown;
};

struct MirroringResult {
  RunMetrics metrics;
  std::vector<MirroringRecord> messages;
  double pcie_share = 0;  // (pcie_const + pcie_var) / total
};

/// Synchronous mirroring: a dependent stream of one-sided writes with
/// sizes drawn from the message-size histogram.
MirroringResult run_sync_mirroring(const nic::NicConfig& nic,
                                   const WorkloadSpec& spec);

struct EmulationConfig {
  nic::NicConfig nic;
  std::uint32_t physical_nodes = 4;
  std::uint32_t threads_per_node = 20;
  std::uint32_t virtual_machines = 32;
  std::uint32_t coroutines_per_thread = 32;
  std::uint64_t key_count = 1 << 16;
  std::uint64_t ops_per_coroutine = 60;
  std::uint64_t seed = 1;
  double warmup_frac = 0.3;
};

/// Emulated larger cluster: full sibling connection/buffer state for
/// `virtual_machines`, lookups routed over the virtual connections.
/// Returns per-machine throughput in ops/us.
double run_emulation(const EmulationConfig& cfg);

}  // namespace stormsim::wl
