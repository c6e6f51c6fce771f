#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stormsim/nic/cache.hpp"
#include "stormsim/nic/config.hpp"
#include "stormsim/sim/engine.hpp"

namespace stormsim::nic {

enum class OneSidedOp : std::uint8_t { Read, Write, WriteImm };

const char* to_string(OneSidedOp op);

/// Four-bucket latency attribution for one operation. The buckets
/// partition the round trip exactly: total() is the sum, and the event
/// pipeline in the verbs layer is built from the same phase helpers so
/// that simulated timestamps telescope to the same value.
struct LatencyBreakdown {
  sim::SimTime pcie_const = 0;  // doorbell + descriptor fetch + CQE write
  sim::SimTime pcie_var = 0;    // payload DMA on both hosts
  sim::SimTime net_const = 0;   // propagation, PU service, state lookups
  sim::SimTime net_var = 0;     // wire serialization of the payload

  sim::SimTime total() const {
    return pcie_const + pcie_var + net_const + net_var;
  }
  LatencyBreakdown& operator+=(const LatencyBreakdown& o) {
    pcie_const += o.pcie_const;
    pcie_var += o.pcie_var;
    net_const += o.net_const;
    net_var += o.net_var;
    return *this;
  }
};

// Phase durations. Every latency charged by the pipeline goes through
// one of these, which is what makes the closed form and the event
// machinery agree to the nanosecond.
sim::SimTime payload_dma_ns(const NicConfig& cfg, std::uint64_t bytes);
sim::SimTime wire_serialize_ns(const NicConfig& cfg, std::uint64_t bytes);
sim::SimTime miss_penalty_ns(const NicConfig& cfg);
sim::SimTime lookup_latency_ns(const NicConfig& cfg, CacheOutcome outcome);
sim::SimTime lookups_latency_ns(const NicConfig& cfg,
                                std::span<const CacheOutcome> outcomes);

/// MTT lookups charged for touching [offset, offset+len) of a region
/// with the given page size: ceil((offset mod page + len) / page).
std::uint64_t pages_touched(std::uint64_t offset, std::uint64_t len,
                            std::uint64_t page_size);

/// Closed-form unloaded latency of a single one-sided operation given
/// the cache outcomes observed at both NICs (initiator's then target's).
LatencyBreakdown compute_breakdown(const NicConfig& cfg, OneSidedOp op,
                                   std::uint64_t payload_bytes,
                                   std::span<const CacheOutcome> outcomes);

/// Same formula with every lookup a hit; the lower bound over outcome
/// vectors. `lookups` is the total lookup count across both sides.
LatencyBreakdown all_hit_breakdown(const NicConfig& cfg, OneSidedOp op,
                                   std::uint64_t payload_bytes,
                                   std::size_t lookups = 6);

}  // namespace stormsim::nic
