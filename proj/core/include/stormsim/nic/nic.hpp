#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "stormsim/nic/cache.hpp"
#include "stormsim/nic/config.hpp"
#include "stormsim/nic/latency.hpp"
#include "stormsim/sim/engine.hpp"

namespace stormsim::nic {

struct MemoryRegionMeta {
  std::uint32_t region_id = 0;
  std::uint64_t base = 0;
  std::uint64_t length_bytes = 0;
  std::uint64_t page_size_bytes = 0;
  bool is_physical_segment = false;
  std::uint64_t mtt_entry_count = 0;
  std::uint64_t mpt_entry_count = 0;
};

constexpr std::uint64_t kPage4K = 4ull << 10;
constexpr std::uint64_t kPage2M = 2ull << 20;
constexpr std::uint64_t kPage1G = 1ull << 30;

/// One simulated RNIC: the transport-state cache, the processing units,
/// and the region metadata (MTT/MPT) it is responsible for. Owned by a
/// single engine; never shared across engines.
class Nic {
 public:
  explicit Nic(NicConfig cfg) : cfg_(std::move(cfg)), cache_(cfg_.cache_capacity_bytes) {
    cfg_.validate();
    pu_free_.assign(cfg_.num_pus, 0);
  }

  const NicConfig& config() const { return cfg_; }
  NicCache& cache() { return cache_; }
  const NicCache& cache() const { return cache_; }

  /// Register a memory region; MTT/MPT entry counts follow the page
  /// arithmetic (a physical segment needs one of each). Throws on an
  /// unaligned base or unsupported page size.
  MemoryRegionMeta register_region(std::uint32_t region_id, std::uint64_t base,
                                   std::uint64_t length,
                                   std::uint64_t page_size,
                                   bool is_physical_segment);

  const MemoryRegionMeta* find_region(std::uint32_t region_id) const;

  /// Returns the NIC-local QP index; PU affinity is index mod num_pus
  /// so QPs spread evenly over this NIC's processing units.
  std::uint64_t add_qp(std::uint64_t qp_id);

  /// Posted-but-unconsumed UD recv WQEs occupy trackable (and cacheable)
  /// state; RC recvs are consumed as credit tokens only.
  void add_recv_wqe(std::uint64_t wqe_id);
  void consume_recv_wqe(std::uint64_t wqe_id);

  /// Touch the given state entries at the current time; returns the
  /// outcome per key, appending to `out`.
  void lookup(const std::vector<StateKey>& keys,
              std::vector<CacheOutcome>& out);

  /// The state keys an operation touching [offset, offset+len) of a
  /// region exercises on this NIC: one QP entry, the touched MTT pages,
  /// and the region's MPT entry.
  std::vector<StateKey> op_state_keys(std::uint64_t qp_id,
                                      std::uint32_t region_id,
                                      std::uint64_t offset,
                                      std::uint64_t len) const;

  /// FIFO admission on the PU serving `qp_id` (qp_id mod num_pus).
  /// `stage_ns` is the PU occupancy for this WQE: service time plus the
  /// lookup latencies already resolved via lookup(). Returns the exit
  /// time of the WQE; the PU stays busy until then.
  sim::SimTime pu_admit(std::uint64_t qp_id, sim::SimTime ready_at,
                        sim::SimTime stage_ns);

  // Table-1 accounting.
  std::uint64_t qp_count() const { return qp_count_; }
  std::uint64_t mtt_entries() const { return mtt_entries_; }
  std::uint64_t mpt_entries() const { return mpt_entries_; }
  std::uint64_t recv_wqe_bytes() const { return recv_wqe_bytes_; }
  std::uint64_t trackable_bytes() const;

  /// Recompute the trackable total from region metadata and compare to
  /// the running counters; throws std::logic_error on mismatch.
  void verify_accounting() const;

 private:
  NicConfig cfg_;
  NicCache cache_;
  std::vector<sim::SimTime> pu_free_;
  std::unordered_map<std::uint32_t, MemoryRegionMeta> regions_;
  std::uint64_t qp_count_ = 0;
  std::uint64_t mtt_entries_ = 0;
  std::uint64_t mpt_entries_ = 0;
  std::uint64_t recv_wqe_bytes_ = 0;
};

}  // namespace stormsim::nic
