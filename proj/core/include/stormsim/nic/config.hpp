#pragma once

#include <cstdint>
#include <string>

#include "stormsim/sim/engine.hpp"

namespace stormsim::nic {

/// Timing and capacity parameters for one RNIC generation. Shipped
/// presets (presets/*.preset) carry calibrated values; see the fit tool
/// in the CLI for how they are produced.
struct NicConfig {
  std::uint64_t cache_capacity_bytes = 2ull << 20;
  std::uint32_t num_pus = 8;
  sim::SimTime pu_service_ns = 30;
  sim::SimTime cache_hit_ns = 2;
  sim::SimTime cache_miss_ns = 800;  // DMA round trip to host memory
  sim::SimTime pcie_write_ns = 300;  // doorbell / CQE posted write
  sim::SimTime pcie_dma_rt_ns = 380;  // descriptor fetch round trip
  double pcie_per_byte_ns = 0.045;
  sim::SimTime wire_prop_ns = 345;
  double wire_per_byte_ns = 0.08;
  double miss_overlap_factor = 1.0;  // in (0,1]; lower = misses overlap more
  std::uint32_t mtt_entry_bytes = 16;
  std::uint32_t mpt_entry_bytes = 32;
  std::uint32_t recv_wqe_bytes = 64;
  // Host-side constants consumed by the dataplane layer.
  sim::SimTime host_rpc_ns = 20;     // RPC handler service time
  sim::SimTime host_repost_ns = 150; // per-message recv repost (UD baseline)

  /// Throws std::invalid_argument when a field violates its range.
  void validate() const;
};

/// Parse a flat `key = value` preset file. Unknown keys are rejected
/// with the offending line number in the exception message.
NicConfig load_preset(const std::string& path);
NicConfig parse_preset(const std::string& text, const std::string& origin);
void save_preset(const NicConfig& cfg, const std::string& path);
std::string preset_to_string(const NicConfig& cfg);

constexpr std::uint32_t kQpStateBytes = 375;
constexpr std::uint32_t kCachelineBytes = 64;

}  // namespace stormsim::nic
