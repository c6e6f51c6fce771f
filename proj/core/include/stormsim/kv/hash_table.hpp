#pragma once

#include <cstdint>
#include <list>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "stormsim/dp/dataplane.hpp"
#include "stormsim/kv/allocator.hpp"
#include "stormsim/kv/slot.hpp"

namespace stormsim::kv {

/// Client-side hint cache mapping keys to (region, offset). Entries are
/// hints only: a stale address is caught by the key check in lookup_end
/// and refreshed from the next RPC reply.
class AddressCache {
 public:
  explicit AddressCache(std::size_t capacity) : capacity_(capacity) {}

  std::optional<Allocation> get(std::uint64_t key);
  void put(std::uint64_t key, const Allocation& a);

  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }
  std::size_t size() const { return map_.size(); }

 private:
  std::size_t capacity_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
  std::list<std::uint64_t> lru_;
  std::unordered_map<std::uint64_t,
                     std::pair<Allocation, std::list<std::uint64_t>::iterator>>
      map_;
};

struct TableConfig {
  std::uint64_t n_buckets = 1 << 16;  // power of two
  std::uint32_t bucket_width = 1;
  std::uint32_t value_bytes = 104;    // 24B header + value = 128B transfers
  bool farm_mode = false;             // read whole buckets (width x slot)
};

/// Smallest power-of-two bucket count keeping expected occupancy at or
/// below `target` for `key_count` keys.
std::uint64_t buckets_for(std::uint64_t key_count, double target,
                          std::uint32_t width);

/// One node's partition of the hash table: fixed-width buckets with
/// overflow chains, all living in registered memory carved from the
/// contiguous allocator so remote reads can fetch slots directly.
class HashTable {
 public:
  HashTable(verbs::Fabric& fabric, sim::NodeId node, TableConfig cfg,
            ContiguousAllocator& alloc);

  const TableConfig& config() const { return cfg_; }
  std::uint32_t slot_bytes() const { return kSlotHeaderBytes + cfg_.value_bytes; }
  std::uint32_t bucket_bytes() const {
    return cfg_.bucket_width * slot_bytes() + kChainPtrBytes;
  }
  std::uint64_t bucket_of(std::uint64_t key) const {
    return hash64(key ^ kBucketSalt) & (cfg_.n_buckets - 1);
  }
  /// Address of slot 0 of the key's bucket: the client's one-sided guess.
  Allocation bucket_guess(std::uint64_t key) const;

  // Owner-side operations (run on the owner's event loop).
  bool insert(std::uint64_t key, std::span<const std::uint8_t> value);
  bool erase(std::uint64_t key);
  std::optional<Allocation> find(std::uint64_t key);
  dp::RpcStatus lock(std::uint64_t key, std::uint64_t tx_id,
                     Allocation* out = nullptr);
  dp::RpcStatus unlock(std::uint64_t key, std::uint64_t tx_id, bool commit,
                       std::span<const std::uint8_t> new_value);

  SlotHeader header_at(const Allocation& a);
  std::span<std::uint8_t> slot_at(const Allocation& a);

  /// Full-table walk: fn(key, header, value, bucket_index). Throws on a
  /// chain cycle or a node reachable from the wrong bucket.
  void walk(const std::function<void(std::uint64_t, const SlotHeader&,
                                     std::span<const std::uint8_t>,
                                     std::uint64_t)>& fn);
  std::uint64_t locked_slot_count();
  std::uint64_t key_count();
  std::uint64_t version_floor(std::uint64_t key) const;
  const std::unordered_map<std::uint64_t, std::uint64_t>& version_floors()
      const {
    return version_floor_;
  }

 private:
  static constexpr std::uint32_t kChainPtrBytes = 16;
  static constexpr std::uint64_t kBucketSalt = 0x5bd1e9955bd1e995ull;

  struct ChainPtr {
    std::uint32_t region = verbs::kInvalidRegion;
    std::uint32_t pad = 0;
    std::uint64_t offset = 0;
    bool nil() const { return region == verbs::kInvalidRegion; }
  };

  Allocation bucket_addr(std::uint64_t bucket) const;
  ChainPtr read_chain(const Allocation& a, std::uint64_t off);
  void write_chain(const Allocation& a, std::uint64_t off, const ChainPtr& p);
  void write_slot(const Allocation& a, std::uint64_t key, std::uint64_t lock,
                  std::uint64_t version, std::span<const std::uint8_t> value);
  std::uint64_t next_version(std::uint64_t key) const;

  verbs::Fabric& fabric_;
  sim::NodeId node_;
  TableConfig cfg_;
  ContiguousAllocator& alloc_;
  Allocation table_;
  // Last version of erased keys so reinsertions continue the counter.
  std::unordered_map<std::uint64_t, std::uint64_t> version_floor_;
};

/// The distributed table: per-physical-node partitions, key routing by
/// hash over the virtual machines, and the Table-3 callbacks registered
/// on every node (lookup_start guessing bucket addresses, lookup_end
/// validating and feeding each node's address cache).
class DistributedKv {
 public:
  DistributedKv(dp::Cluster& cluster, std::uint32_t object_id,
                TableConfig cfg, std::uint64_t address_cache_capacity = 1 << 20,
                std::uint64_t chunk_size = 64ull << 20);

  std::uint32_t object_id() const { return object_id_; }
  std::uint32_t owner_of(std::uint64_t key) const {
    return static_cast<std::uint32_t>(hash64(key) %
                                      cluster_.virtual_machines());
  }
  sim::NodeId physical_owner(std::uint64_t key) const {
    return cluster_.physical_of(owner_of(key));
  }
  HashTable& table(sim::NodeId node) { return *tables_[node]; }
  AddressCache& cache(sim::NodeId node) { return *caches_[node]; }
  ContiguousAllocator& allocator(sim::NodeId node) { return *allocs_[node]; }
  std::uint32_t read_size() const;

  /// Out-of-band insert during setup (no simulated traffic).
  void preload(std::uint64_t key, std::span<const std::uint8_t> value);

  /// Fill every node's address cache with exact addresses for keys
  /// [1, key_count] ("perfect" mode: no RPC fallbacks on the data path).
  void warm_address_caches(std::uint64_t key_count);

  std::uint64_t total_locked_slots();

 private:
  dp::DataStructureCallbacks make_callbacks(sim::NodeId node);

  dp::Cluster& cluster_;
  std::uint32_t object_id_;
  TableConfig cfg_;
  std::vector<std::unique_ptr<ContiguousAllocator>> allocs_;
  std::vector<std::unique_ptr<HashTable>> tables_;
  std::vector<std::unique_ptr<AddressCache>> caches_;
};

}  // namespace stormsim::kv
