#include "stormsim/kv/allocator.hpp"

#include <stdexcept>

namespace stormsim::kv {

ContiguousAllocator::ContiguousAllocator(verbs::Fabric& fabric,
                                         sim::NodeId node,
                                         std::uint64_t chunk_size,
                                         std::uint64_t page_size,
                                         bool physical_segments)
    : fabric_(fabric),
      node_(node),
      chunk_size_(chunk_size),
      page_size_(page_size),
      physical_(physical_segments) {}

Allocation ContiguousAllocator::alloc(std::uint64_t size) {
  if (size == 0) throw std::invalid_argument("alloc: zero size");
  size = (size + 7) & ~std::uint64_t{7};
  if (size > chunk_size_)
    throw std::invalid_argument("alloc: size exceeds chunk size");

  auto fit = freelist_.find(size);
  if (fit != freelist_.end() && !fit->second.empty()) {
    Allocation a = fit->second.back();
    fit->second.pop_back();
    total_allocated_ += size;
    return a;
  }

  for (Chunk& c : chunks_) {
    if (c.bump + size <= c.capacity) {
      Allocation a{c.region, c.bump};
      c.bump += size;
      total_allocated_ += size;
      return a;
    }
  }

  verbs::RegionId r =
      fabric_.register_region(node_, chunk_size_, page_size_, physical_);
  chunks_.push_back(Chunk{r, size, chunk_size_});
  total_allocated_ += size;
  return Allocation{r, 0};
}

void ContiguousAllocator::free(const Allocation& a, std::uint64_t size) {
  size = (size + 7) & ~std::uint64_t{7};
  freelist_[size].push_back(a);
  total_allocated_ -= size;
}

}  // namespace stormsim::kv
