#include "stormsim/kv/hash_table.hpp"

#include <cstring>
#include <stdexcept>
#include <unordered_set>

namespace stormsim::kv {

std::optional<Allocation> AddressCache::get(std::uint64_t key) {
  auto it = map_.find(key);
  if (it == map_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  lru_.splice(lru_.begin(), lru_, it->second.second);
  return it->second.first;
}

void AddressCache::put(std::uint64_t key, const Allocation& a) {
  auto it = map_.find(key);
  if (it != map_.end()) {
    it->second.first = a;
    lru_.splice(lru_.begin(), lru_, it->second.second);
    return;
  }
  if (map_.size() >= capacity_ && !lru_.empty()) {
    map_.erase(lru_.back());
    lru_.pop_back();
  }
  lru_.push_front(key);
  map_[key] = {a, lru_.begin()};
}

std::uint64_t buckets_for(std::uint64_t key_count, double target,
                          std::uint32_t width) {
  if (target <= 0.0 || width == 0)
    throw std::invalid_argument("buckets_for: bad target or width");
  auto needed = static_cast<std::uint64_t>(
      static_cast<double>(key_count) / (target * width) + 0.999999);
  std::uint64_t n = 1;
  while (n < needed) n <<= 1;
  return n;
}

HashTable::HashTable(verbs::Fabric& fabric, sim::NodeId node, TableConfig cfg,
                     ContiguousAllocator& alloc)
    : fabric_(fabric), node_(node), cfg_(cfg), alloc_(alloc) {
  if (cfg_.n_buckets == 0 || (cfg_.n_buckets & (cfg_.n_buckets - 1)) != 0)
    throw std::invalid_argument("HashTable: n_buckets must be a power of two");
  if (cfg_.bucket_width == 0 || cfg_.value_bytes == 0)
    throw std::invalid_argument("HashTable: zero sizes");
  table_ = alloc_.alloc(cfg_.n_buckets * bucket_bytes());
  auto bytes = fabric_.region_bytes(table_.region, table_.offset,
                                    cfg_.n_buckets * bucket_bytes());
  std::fill(bytes.begin(), bytes.end(), 0);
  // Chain heads start nil.
  for (std::uint64_t b = 0; b < cfg_.n_buckets; ++b)
    write_chain(bucket_addr(b), cfg_.bucket_width * slot_bytes(), ChainPtr{});
}

Allocation HashTable::bucket_addr(std::uint64_t bucket) const {
  return Allocation{table_.region, table_.offset + bucket * bucket_bytes()};
}

Allocation HashTable::bucket_guess(std::uint64_t key) const {
  return bucket_addr(bucket_of(key));
}

HashTable::ChainPtr HashTable::read_chain(const Allocation& a,
                                          std::uint64_t off) {
  ChainPtr p;
  auto b = fabric_.region_bytes(a.region, a.offset + off, kChainPtrBytes);
  std::memcpy(&p, b.data(), sizeof p);
  return p;
}

void HashTable::write_chain(const Allocation& a, std::uint64_t off,
                            const ChainPtr& p) {
  auto b = fabric_.region_bytes(a.region, a.offset + off, kChainPtrBytes);
  std::memcpy(b.data(), &p, sizeof p);
}

SlotHeader HashTable::header_at(const Allocation& a) {
  auto b = fabric_.region_bytes(a.region, a.offset, kSlotHeaderBytes);
  SlotHeader h;
  std::memcpy(&h, b.data(), sizeof h);
  return h;
}

std::span<std::uint8_t> HashTable::slot_at(const Allocation& a) {
  return fabric_.region_bytes(a.region, a.offset, slot_bytes());
}

void HashTable::write_slot(const Allocation& a, std::uint64_t key,
                           std::uint64_t lock, std::uint64_t version,
                           std::span<const std::uint8_t> value) {
  auto b = slot_at(a);
  SlotHeader h{key, lock, version};
  std::memcpy(b.data(), &h, sizeof h);
  std::size_t n = std::min<std::size_t>(value.size(), cfg_.value_bytes);
  if (n) std::memcpy(b.data() + kSlotHeaderBytes, value.data(), n);
  if (n < cfg_.value_bytes)
    std::memset(b.data() + kSlotHeaderBytes + n, 0, cfg_.value_bytes - n);
}

std::uint64_t HashTable::next_version(std::uint64_t key) const {
  auto it = version_floor_.find(key);
  return it == version_floor_.end() ? 1 : it->second + 1;
}

std::uint64_t HashTable::version_floor(std::uint64_t key) const {
  auto it = version_floor_.find(key);
  return it == version_floor_.end() ? 0 : it->second;
}

std::optional<Allocation> HashTable::find(std::uint64_t key) {
  if (key == 0) throw std::invalid_argument("find: key 0 is reserved");
  std::uint64_t b = bucket_of(key);
  Allocation ba = bucket_addr(b);
  for (std::uint32_t s = 0; s < cfg_.bucket_width; ++s) {
    Allocation sa{ba.region, ba.offset + std::uint64_t(s) * slot_bytes()};
    if (header_at(sa).key == key) return sa;
  }
  ChainPtr p = read_chain(ba, cfg_.bucket_width * slot_bytes());
  while (!p.nil()) {
    Allocation sa{p.region, p.offset};
    if (header_at(sa).key == key) return sa;
    p = read_chain(sa, slot_bytes());
  }
  return std::nullopt;
}

bool HashTable::insert(std::uint64_t key, std::span<const std::uint8_t> value) {
  if (key == 0) throw std::invalid_argument("insert: key 0 is reserved");
  if (auto found = find(key)) {
    SlotHeader h = header_at(*found);
    version_floor_[key] = h.version + 1;
    write_slot(*found, key, h.lock, h.version + 1, value);
    return false;  // updated in place
  }
  std::uint64_t b = bucket_of(key);
  Allocation ba = bucket_addr(b);
  for (std::uint32_t s = 0; s < cfg_.bucket_width; ++s) {
    Allocation sa{ba.region, ba.offset + std::uint64_t(s) * slot_bytes()};
    if (header_at(sa).key == 0) {
      std::uint64_t v = next_version(key);
      version_floor_[key] = v;
      write_slot(sa, key, 0, v, value);
      return true;
    }
  }
  // Bucket full: push a node onto the overflow chain.
  Allocation node = alloc_.alloc(slot_bytes() + kChainPtrBytes);
  std::uint64_t v = next_version(key);
  version_floor_[key] = v;
  write_slot(node, key, 0, v, value);
  ChainPtr head = read_chain(ba, cfg_.bucket_width * slot_bytes());
  write_chain(node, slot_bytes(), head);
  write_chain(ba, cfg_.bucket_width * slot_bytes(),
              ChainPtr{node.region, 0, node.offset});
  return true;
}

bool HashTable::erase(std::uint64_t key) {
  std::uint64_t b = bucket_of(key);
  Allocation ba = bucket_addr(b);
  for (std::uint32_t s = 0; s < cfg_.bucket_width; ++s) {
    Allocation sa{ba.region, ba.offset + std::uint64_t(s) * slot_bytes()};
    SlotHeader h = header_at(sa);
    if (h.key == key) {
      // A delete is a committed write of the key: the counter advances
      // so reinsertion continues the sequence.
      version_floor_[key] = h.version + 1;
      std::vector<std::uint8_t> zeros(cfg_.value_bytes, 0);
      write_slot(sa, 0, 0, 0, zeros);
      return true;
    }
  }
  std::uint64_t head_off = cfg_.bucket_width * slot_bytes();
  ChainPtr p = read_chain(ba, head_off);
  Allocation prev = ba;
  std::uint64_t prev_off = head_off;
  while (!p.nil()) {
    Allocation sa{p.region, p.offset};
    SlotHeader h = header_at(sa);
    if (h.key == key) {
      version_floor_[key] = h.version + 1;
      ChainPtr next = read_chain(sa, slot_bytes());
      write_chain(prev, prev_off, next);
      alloc_.free(sa, slot_bytes() + kChainPtrBytes);
      return true;
    }
    prev = sa;
    prev_off = slot_bytes();
    p = read_chain(sa, slot_bytes());
  }
  return false;
}

dp::RpcStatus HashTable::lock(std::uint64_t key, std::uint64_t tx_id,
                              Allocation* out) {
  auto found = find(key);
  if (!found) return dp::RpcStatus::NotFound;
  SlotHeader h = header_at(*found);
  if (h.lock != 0 && h.lock != tx_id) return dp::RpcStatus::LockBusy;
  h.lock = tx_id;
  auto b = slot_at(*found);
  std::memcpy(b.data(), &h, sizeof h);
  if (out) *out = *found;
  return dp::RpcStatus::OK;
}

dp::RpcStatus HashTable::unlock(std::uint64_t key, std::uint64_t tx_id,
                                bool commit,
                                std::span<const std::uint8_t> new_value) {
  auto found = find(key);
  if (!found) return dp::RpcStatus::NotFound;
  SlotHeader h = header_at(*found);
  if (h.lock != tx_id) throw std::logic_error("unlock: lock not held by tx");
  if (commit) {
    version_floor_[key] = h.version + 1;
    write_slot(*found, key, 0, h.version + 1, new_value);
  } else {
    h.lock = 0;
    auto b = slot_at(*found);
    std::memcpy(b.data(), &h, sizeof h);
  }
  return dp::RpcStatus::OK;
}

void HashTable::walk(const std::function<void(std::uint64_t, const SlotHeader&,
                                              std::span<const std::uint8_t>,
                                              std::uint64_t)>& fn) {
  std::unordered_set<std::uint64_t> seen_nodes;
  for (std::uint64_t b = 0; b < cfg_.n_buckets; ++b) {
    Allocation ba = bucket_addr(b);
    for (std::uint32_t s = 0; s < cfg_.bucket_width; ++s) {
      Allocation sa{ba.region, ba.offset + std::uint64_t(s) * slot_bytes()};
      SlotHeader h = header_at(sa);
      if (h.key == 0) continue;
      if (bucket_of(h.key) != b)
        throw std::logic_error("walk: key stored in the wrong bucket");
      auto bytes = slot_at(sa);
      fn(h.key, h, bytes.subspan(kSlotHeaderBytes, cfg_.value_bytes), b);
    }
    ChainPtr p = read_chain(ba, cfg_.bucket_width * slot_bytes());
    while (!p.nil()) {
      std::uint64_t id =
          (std::uint64_t(p.region) << 40) ^ (p.offset + 0x9e3779b9u);
      if (!seen_nodes.insert(id).second)
        throw std::logic_error("walk: cycle in overflow chain");
      Allocation sa{p.region, p.offset};
      SlotHeader h = header_at(sa);
      if (h.key == 0) throw std::logic_error("walk: empty chain node");
      if (bucket_of(h.key) != b)
        throw std::logic_error("walk: chained key in the wrong bucket");
      auto bytes = slot_at(sa);
      fn(h.key, h, bytes.subspan(kSlotHeaderBytes, cfg_.value_bytes), b);
      p = read_chain(sa, slot_bytes());
    }
  }
}

std::uint64_t HashTable::locked_slot_count() {
  std::uint64_t n = 0;
  walk([&](std::uint64_t, const SlotHeader& h, auto, std::uint64_t) {
    if (h.lock != 0) ++n;
  });
  return n;
}

std::uint64_t HashTable::key_count() {
  std::uint64_t n = 0;
  walk([&](std::uint64_t, const SlotHeader&, auto, std::uint64_t) { ++n; });
  return n;
}

// ---------------------------------------------------------------------------
// DistributedKv
// ---------------------------------------------------------------------------

DistributedKv::DistributedKv(dp::Cluster& cluster, std::uint32_t object_id,
                             TableConfig cfg,
                             std::uint64_t address_cache_capacity,
                             std::uint64_t chunk_size)
    : cluster_(cluster), object_id_(object_id), cfg_(cfg) {
  for (sim::NodeId n = 0; n < cluster_.physical_nodes(); ++n) {
    allocs_.push_back(std::make_unique<ContiguousAllocator>(
        cluster_.fabric(), n, chunk_size));
    tables_.push_back(std::make_unique<HashTable>(cluster_.fabric(), n, cfg_,
                                                  *allocs_.back()));
    caches_.push_back(std::make_unique<AddressCache>(address_cache_capacity));
  }
  for (sim::NodeId n = 0; n < cluster_.physical_nodes(); ++n)
    cluster_.dataplane(n).register_handler(object_id_, make_callbacks(n));
}

std::uint32_t DistributedKv::read_size() const {
  std::uint32_t slot = kSlotHeaderBytes + cfg_.value_bytes;
  return cfg_.farm_mode ? cfg_.bucket_width * slot : slot;
}

void DistributedKv::preload(std::uint64_t key,
                            std::span<const std::uint8_t> value) {
  table(physical_owner(key)).insert(key, value);
}

void DistributedKv::warm_address_caches(std::uint64_t key_count) {
  for (std::uint64_t k = 1; k <= key_count; ++k) {
    sim::NodeId owner = physical_owner(k);
    auto found = tables_[owner]->find(k);
    if (!found) continue;
    for (sim::NodeId n = 0; n < cluster_.physical_nodes(); ++n)
      if (n != owner) caches_[n]->put(k, *found);
  }
}

std::uint64_t DistributedKv::total_locked_slots() {
  std::uint64_t n = 0;
  for (auto& t : tables_) n += t->locked_slot_count();
  return n;
}

dp::DataStructureCallbacks DistributedKv::make_callbacks(sim::NodeId node) {
  dp::DataStructureCallbacks cbs;
  HashTable* table = tables_[node].get();
  AddressCache* cache = caches_[node].get();

  cbs.route = [this](std::uint64_t key) { return owner_of(key); };

  cbs.lookup_start = [this, cache](std::uint32_t, std::uint64_t key) {
    dp::LookupStartResult r;
    if (auto hit = cache->get(key)) {
      r.region = hit->region;
      r.offset = hit->offset;
      r.size = read_size();
      return r;
    }
    // No cached address: the hash gives a guess, so a hash table never
    // answers "no guess".
    sim::NodeId owner = physical_owner(key);
    Allocation guess = tables_[owner]->bucket_guess(key);
    r.region = guess.region;
    r.offset = guess.offset;
    r.size = read_size();
    return r;
  };

  cbs.lookup_end = [this, cache](std::span<const std::uint8_t> buffer,
                                 std::uint64_t key, verbs::RegionId region,
                                 std::uint64_t offset) {
    if (buffer.size() < kSlotHeaderBytes) return false;
    std::uint32_t slot = kSlotHeaderBytes + cfg_.value_bytes;
    std::uint32_t nslots = cfg_.farm_mode ? cfg_.bucket_width : 1;
    for (std::uint32_t s = 0; s < nslots; ++s) {
      if ((s + 1) * std::uint64_t(slot) > buffer.size()) break;
      SlotHeader h = read_slot_header(buffer.subspan(s * std::uint64_t(slot)));
      if (h.key == key && h.lock == 0) {
        cache->put(key, Allocation{region, offset});
        return true;
      }
    }
    return false;
  };

  cbs.rpc_handler = [this, table](const dp::RpcRequest& req) {
    dp::RpcReply rep;
    auto op = static_cast<dp::RpcOp>(req.hdr.opcode);
    switch (op) {
      case dp::RpcOp::READ: {
        auto found = table->find(req.key);
        if (!found) {
          rep.status = dp::RpcStatus::NotFound;
          break;
        }
        rep.status = dp::RpcStatus::OK;
        rep.region = found->region;
        rep.offset = found->offset;
        auto bytes = table->slot_at(*found);
        rep.slot.assign(bytes.begin(), bytes.end());
        break;
      }
      case dp::RpcOp::LOCK_READ: {
        Allocation found;
        rep.status = table->lock(req.key, req.tx_id, &found);
        if (rep.status == dp::RpcStatus::OK) {
          rep.region = found.region;
          rep.offset = found.offset;
          auto bytes = table->slot_at(found);
          rep.slot.assign(bytes.begin(), bytes.end());
        }
        break;
      }
      case dp::RpcOp::UPDATE_UNLOCK: {
        bool commit = (req.hdr.flags & dp::kFlagAbortUnlock) == 0;
        rep.status = table->unlock(req.key, req.tx_id, commit, req.value);
        break;
      }
      case dp::RpcOp::INSERT: {
        if (auto prior = table->find(req.key)) {
          // An upsert under a transaction's lock would tear its write.
          if (table->header_at(*prior).lock != 0) {
            rep.status = dp::RpcStatus::LockBusy;
            break;
          }
        }
        table->insert(req.key, req.value);
        auto found = table->find(req.key);
        rep.status = dp::RpcStatus::OK;
        rep.region = found->region;
        rep.offset = found->offset;
        auto bytes = table->slot_at(*found);
        rep.slot.assign(bytes.begin(), bytes.end());
        break;
      }
      case dp::RpcOp::DELETE: {
        auto found = table->find(req.key);
        if (!found) {
          rep.status = dp::RpcStatus::NotFound;
          break;
        }
        if (table->header_at(*found).lock != 0) {
          rep.status = dp::RpcStatus::LockBusy;
          break;
        }
        auto bytes = table->slot_at(*found);
        rep.slot.assign(bytes.begin(), bytes.end());  // pre-delete image
        table->erase(req.key);
        rep.status = dp::RpcStatus::OK;
        break;
      }
      default:
        rep.status = dp::RpcStatus::BadObject;
    }
    return rep;
  };

  return cbs;
}

}  // namespace stormsim::kv
