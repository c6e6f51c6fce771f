#pragma once

#include <cstdint>
#include <list>
#include <unordered_map>

#include "stormsim/sim/engine.hpp"

namespace stormsim::nic {

enum class StateKind : std::uint8_t { QP, MTT, MPT, RECV_WQE };

const char* to_string(StateKind k);

/// Identifies one cached transport-state entry.
struct StateKey {
  StateKind kind;
  std::uint64_t id;
  std::uint32_t size_bytes;

  bool operator==(const StateKey& o) const {
    return kind == o.kind && id == o.id;
  }
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const {
    std::uint64_t x = (static_cast<std::uint64_t>(k.kind) << 56) ^ k.id;
    x *= 0x9e3779b97f4a7c15ull;
    return static_cast<std::size_t>(x ^ (x >> 29));
  }
};

enum class CacheOutcome : std::uint8_t { Hit, Miss };

/// Byte-granular LRU over transport state. Occupancy never exceeds
/// capacity; inserting a missing entry evicts least-recently-used
/// entries until the new one fits.
class NicCache {
 public:
  explicit NicCache(std::uint64_t capacity_bytes)
      : capacity_(capacity_bytes) {}

  /// Touch `key`; returns Hit or Miss and updates recency/occupancy.
  /// Throws if a single entry exceeds the capacity.
  CacheOutcome access(const StateKey& key);

  /// Remove an entry if resident (e.g. a consumed recv WQE).
  void invalidate(const StateKey& key);

  std::uint64_t occupancy_bytes() const { return occupancy_; }
  std::uint64_t capacity_bytes() const { return capacity_; }
  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }
  std::size_t resident_entries() const { return lru_.size(); }
  double hit_rate() const {
    std::uint64_t n = hits_ + misses_;
    return n == 0 ? 0.0 : static_cast<double>(hits_) / static_cast<double>(n);
  }

 private:
  std::uint64_t capacity_;
  std::uint64_t occupancy_ = 0;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
  // Front = most recently used.
  std::list<StateKey> lru_;
  std::unordered_map<StateKey, std::list<StateKey>::iterator, StateKeyHash>
      index_;
};

}  // namespace stormsim::nic
