#include "stormsim/nic/nic.hpp"

#include <algorithm>
#include <stdexcept>

namespace stormsim::nic {

MemoryRegionMeta Nic::register_region(std::uint32_t region_id,
                                      std::uint64_t base, std::uint64_t length,
                                      std::uint64_t page_size,
                                      bool is_physical_segment) {
  if (length == 0) throw std::invalid_argument("register_region: length == 0");
  if (page_size != kPage4K && page_size != kPage2M && page_size != kPage1G)
    throw std::invalid_argument("register_region: unsupported page size");
  if (base % page_size != 0)
    throw std::invalid_argument("register_region: base not page-aligned");
  if (regions_.count(region_id))
    throw std::invalid_argument("register_region: duplicate region id");

  MemoryRegionMeta meta;
  meta.region_id = region_id;
  meta.base = base;
  meta.length_bytes = length;
  meta.page_size_bytes = page_size;
  meta.is_physical_segment = is_physical_segment;
  if (is_physical_segment) {
    meta.mtt_entry_count = 1;
    meta.mpt_entry_count = 1;
  } else {
    meta.mtt_entry_count = (length + page_size - 1) / page_size;
    meta.mpt_entry_count = 1;
  }
  regions_[region_id] = meta;
  mtt_entries_ += meta.mtt_entry_count;
  mpt_entries_ += meta.mpt_entry_count;
  return meta;
}

const MemoryRegionMeta* Nic::find_region(std::uint32_t region_id) const {
  auto it = regions_.find(region_id);
  return it == regions_.end() ? nullptr : &it->second;
}

std::uint64_t Nic::add_qp(std::uint64_t) { return qp_count_++; }

void Nic::add_recv_wqe(std::uint64_t wqe_id) {
  recv_wqe_bytes_ += cfg_.recv_wqe_bytes;
  cache_.access(StateKey{StateKind::RECV_WQE, wqe_id, cfg_.recv_wqe_bytes});
}

void Nic::consume_recv_wqe(std::uint64_t wqe_id) {
  recv_wqe_bytes_ -= cfg_.recv_wqe_bytes;
  cache_.invalidate(StateKey{StateKind::RECV_WQE, wqe_id, cfg_.recv_wqe_bytes});
}

void Nic::lookup(const std::vector<StateKey>& keys,
                 std::vector<CacheOutcome>& out) {
  for (const StateKey& k : keys) out.push_back(cache_.access(k));
}

std::vector<StateKey> Nic::op_state_keys(std::uint64_t qp_id,
                                         std::uint32_t region_id,
                                         std::uint64_t offset,
                                         std::uint64_t len) const {
  std::vector<StateKey> keys;
  keys.push_back(StateKey{StateKind::QP, qp_id, kQpStateBytes});
  auto it = regions_.find(region_id);
  if (it != regions_.end()) {
    const MemoryRegionMeta& r = it->second;
    if (r.is_physical_segment) {
      keys.push_back(StateKey{StateKind::MTT,
                              (static_cast<std::uint64_t>(region_id) << 32),
                              cfg_.mtt_entry_bytes});
    } else {
      std::uint64_t first = offset / r.page_size_bytes;
      std::uint64_t n = pages_touched(offset, len, r.page_size_bytes);
      for (std::uint64_t p = 0; p < n; ++p) {
        keys.push_back(
            StateKey{StateKind::MTT,
                     (static_cast<std::uint64_t>(region_id) << 32) | (first + p),
                     cfg_.mtt_entry_bytes});
      }
    }
    keys.push_back(StateKey{StateKind::MPT, region_id, cfg_.mpt_entry_bytes});
  }
  return keys;
}

sim::SimTime Nic::pu_admit(std::uint64_t qp_id, sim::SimTime ready_at,
                           sim::SimTime stage_ns) {
  sim::SimTime& busy_until = pu_free_[qp_id % cfg_.num_pus];
  sim::SimTime start = std::max(ready_at, busy_until);
  busy_until = start + stage_ns;
  return busy_until;
}

std::uint64_t Nic::trackable_bytes() const {
  return kQpStateBytes * qp_count_ + mtt_entries_ * cfg_.mtt_entry_bytes +
         mpt_entries_ * cfg_.mpt_entry_bytes + recv_wqe_bytes_;
}

void Nic::verify_accounting() const {
  std::uint64_t mtt = 0, mpt = 0;
  for (const auto& [id, r] : regions_) {
    mtt += r.mtt_entry_count;
    mpt += r.mpt_entry_count;
  }
  if (mtt != mtt_entries_ || mpt != mpt_entries_)
    throw std::logic_error("Nic accounting mismatch: MTT/MPT counters");
  if (cache_.occupancy_bytes() > cfg_.cache_capacity_bytes)
    throw std::logic_error("Nic accounting mismatch: cache over capacity");
}

}  // namespace stormsim::nic
