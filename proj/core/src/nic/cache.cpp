#include "stormsim/nic/cache.hpp"

#include <stdexcept>

namespace stormsim::nic {

const char* to_string(StateKind k) {
  switch (k) {
    case StateKind::QP: return "QP";
    case StateKind::MTT: return "MTT";
    case StateKind::MPT: return "MPT";
    case StateKind::RECV_WQE: return "RECV_WQE";
  }
  return "?";
}

CacheOutcome NicCache::access(const StateKey& key) {
  if (key.size_bytes > capacity_)
    throw std::invalid_argument("NicCache: entry larger than capacity");
  auto it = index_.find(key);
  if (it != index_.end()) {
    ++hits_;
    lru_.splice(lru_.begin(), lru_, it->second);
    return CacheOutcome::Hit;
  }
  ++misses_;
  while (occupancy_ + key.size_bytes > capacity_) {
    const StateKey& victim = lru_.back();
    occupancy_ -= victim.size_bytes;
    index_.erase(victim);
    lru_.pop_back();
  }
  lru_.push_front(key);
  index_[key] = lru_.begin();
  occupancy_ += key.size_bytes;
  return CacheOutcome::Miss;
}

void NicCache::invalidate(const StateKey& key) {
  auto it = index_.find(key);
  if (it == index_.end()) return;
  occupancy_ -= it->second->size_bytes;
  lru_.erase(it->second);
  index_.erase(it);
}

}  // namespace stormsim::nic
