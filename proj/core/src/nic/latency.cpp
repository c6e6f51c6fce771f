#include "stormsim/nic/latency.hpp"

#include <cmath>

namespace stormsim::nic {

const char* to_string(OneSidedOp op) {
  switch (op) {
    case OneSidedOp::Read: return "read";
    case OneSidedOp::Write: return "write";
    case OneSidedOp::WriteImm: return "write_imm";
  }
  return "?";
}

sim::SimTime payload_dma_ns(const NicConfig& cfg, std::uint64_t bytes) {
  return static_cast<sim::SimTime>(
      std::llround(static_cast<double>(bytes) * cfg.pcie_per_byte_ns));
}

sim::SimTime wire_serialize_ns(const NicConfig& cfg, std::uint64_t bytes) {
  return static_cast<sim::SimTime>(
      std::llround(static_cast<double>(bytes) * cfg.wire_per_byte_ns));
}

sim::SimTime miss_penalty_ns(const NicConfig& cfg) {
  return static_cast<sim::SimTime>(std::llround(
      cfg.miss_overlap_factor * static_cast<double>(cfg.cache_miss_ns)));
}

sim::SimTime lookup_latency_ns(const NicConfig& cfg, CacheOutcome outcome) {
  return outcome == CacheOutcome::Hit ? cfg.cache_hit_ns
                                      : miss_penalty_ns(cfg);
}

sim::SimTime lookups_latency_ns(const NicConfig& cfg,
                                std::span<const CacheOutcome> outcomes) {
  sim::SimTime t = 0;
  for (CacheOutcome o : outcomes) t += lookup_latency_ns(cfg, o);
  return t;
}

std::uint64_t pages_touched(std::uint64_t offset, std::uint64_t len,
                            std::uint64_t page_size) {
  return (offset % page_size + len + page_size - 1) / page_size;
}

LatencyBreakdown compute_breakdown(const NicConfig& cfg, OneSidedOp op,
                                   std::uint64_t payload_bytes,
                                   std::span<const CacheOutcome> outcomes) {
  (void)op;  // all three one-sided shapes share the round-trip formula
  LatencyBreakdown b;
  b.pcie_const = cfg.pcie_write_ns + cfg.pcie_dma_rt_ns + cfg.pcie_write_ns;
  b.pcie_var = 2 * payload_dma_ns(cfg, payload_bytes);
  b.net_const = 2 * cfg.wire_prop_ns + 2 * cfg.pu_service_ns +
                lookups_latency_ns(cfg, outcomes);
  b.net_var = wire_serialize_ns(cfg, payload_bytes);
  return b;
}

LatencyBreakdown all_hit_breakdown(const NicConfig& cfg, OneSidedOp op,
                                   std::uint64_t payload_bytes,
                                   std::size_t lookups) {
  std::vector<CacheOutcome> hits(lookups, CacheOutcome::Hit);
  return compute_breakdown(cfg, op, payload_bytes, hits);
}

}  // namespace stormsim::nic
