#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "stormsim/verbs/verbs.hpp"

namespace stormsim::kv {

struct Allocation {
  verbs::RegionId region = verbs::kInvalidRegion;
  std::uint64_t offset = 0;
};

/// Bump allocator over a small number of large registered chunks; a new
/// region is registered only when no existing chunk has space, keeping
/// MPT entries at ceil(total/chunk_size) instead of one per allocation.
/// Freed blocks go to a size-keyed freelist for reuse; regions are
/// never deregistered.
class ContiguousAllocator {
 public:
  ContiguousAllocator(verbs::Fabric& fabric, sim::NodeId node,
                      std::uint64_t chunk_size = 64ull << 20,
                      std::uint64_t page_size = 2ull << 20,
                      bool physical_segments = false);

  Allocation alloc(std::uint64_t size);
  void free(const Allocation& a, std::uint64_t size);

  std::size_t region_count() const { return chunks_.size(); }
  std::uint64_t total_allocated() const { return total_allocated_; }
  std::uint64_t chunk_size() const { return chunk_size_; }
  sim::NodeId node() const { return node_; }

 private:
  struct Chunk {
    verbs::RegionId region;
    std::uint64_t bump = 0;
    std::uint64_t capacity = 0;
  };

  verbs::Fabric& fabric_;
  sim::NodeId node_;
  std::uint64_t chunk_size_;
  std::uint64_t page_size_;
  bool physical_;
  std::vector<Chunk> chunks_;
  std::map<std::uint64_t, std::vector<Allocation>> freelist_;
  std::uint64_t total_allocated_ = 0;
};

}  // namespace stormsim::kv
