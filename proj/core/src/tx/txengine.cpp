#include "stormsim/tx/txengine.hpp"

#include <sstream>
#include <stdexcept>

namespace stormsim::tx {

const char* to_string(TxStatus s) {
  switch (s) {
    case TxStatus::Active: return "active";
    case TxStatus::Validating: return "validating";
    case TxStatus::Committed: return "committed";
    case TxStatus::Aborted: return "aborted";
  }
  return "?";
}

const char* to_string(AbortReason r) {
  switch (r) {
    case AbortReason::None: return "none";
    case AbortReason::LockBusy: return "lock_busy";
    case AbortReason::ValidationFailed: return "validation_failed";
    case AbortReason::NotFound: return "not_found";
  }
  return "?";
}

const ReadSetEntry* TxContext::find_read(std::uint64_t key) const {
  for (const auto& e : read_set)
    if (e.key == key) return &e;
  return nullptr;
}

WriteSetEntry* TxContext::find_write(std::uint64_t key) {
  for (auto& e : write_set)
    if (e.key == key) return &e;
  return nullptr;
}

bool TxContext::in_write_set(std::uint64_t key) const {
  for (const auto& e : write_set)
    if (e.key == key) return true;
  return false;
}

std::string tx_trace_csv(const std::vector<TxRecord>& records) {
  std::ostringstream out;
  out << "tx_id,status,reason,n_reads,n_rpcs,n_validation_reads,latency_ns\n";
  for (const auto& r : records) {
    out << r.tx_id << ',' << to_string(r.status) << ',' << to_string(r.reason)
        << ',' << r.n_reads << ',' << r.n_rpcs << ',' << r.n_validation_reads
        << ',' << r.latency_ns << '\n';
  }
  return out.str();
}

TxExecutor::TxExecutor(dp::Dataplane& dp, std::uint32_t thread,
                       std::uint32_t slot, std::uint32_t object_id,
                       std::uint32_t value_bytes)
    : dp_(dp),
      thread_(thread),
      slot_(slot),
      object_id_(object_id),
      value_bytes_(value_bytes) {}

std::uint32_t TxExecutor::route(std::uint64_t key) const {
  const dp::DataStructureCallbacks* cbs = dp_.find_handler(object_id_);
  if (!cbs || !cbs->route) throw std::logic_error("TxExecutor: no route");
  return cbs->route(key);
}

TxContext TxExecutor::start_tx() {
  if (active_) throw std::logic_error("start_tx: transaction already active");
  active_ = true;
  TxContext tx;
  // Globally unique, nonzero: encodes (node, thread, slot, local seq).
  tx.tx_id = (std::uint64_t(dp_.node() + 1) << 48) |
             (std::uint64_t(thread_) << 40) | (std::uint64_t(slot_) << 32) |
             ++next_local_;
  tx.started_at = dp_.cluster().engine().now();
  return tx;
}

void TxExecutor::finish(TxContext& tx, TxStatus status, AbortReason reason) {
  tx.finished_at = dp_.cluster().engine().now();
  tx.status = status;
  tx.reason = reason;
  active_ = false;
  if (status == TxStatus::Committed)
    ++committed_;
  else
    ++aborted_;

  TxRecord rec;
  rec.tx_id = tx.tx_id;
  rec.status = status;
  rec.reason = reason;
  for (const auto& e : tx.read_set)
    rec.reads.emplace_back(e.key, e.observed_version);
  if (status == TxStatus::Committed) {
    for (const auto& e : tx.write_set) {
      rec.writes.emplace_back(e.key, e.observed_version + 1);
      rec.write_values.push_back(e.new_value);
    }
  }
  rec.n_reads = tx.n_reads;
  rec.n_rpcs = tx.n_rpcs;
  rec.n_validation_reads = tx.n_validation_reads;
  rec.latency_ns = tx.finished_at - tx.started_at;
  records_.push_back(std::move(rec));
}

dp::Task<void> TxExecutor::release_locks(TxContext& tx) {
  for (auto& e : tx.write_set) {
    if (!e.lock_held) continue;
    dp::RpcReply rep = co_await dp_.rpc_send(
        thread_, slot_, route(e.key), dp::RpcOp::UPDATE_UNLOCK, object_id_,
        e.key, tx.tx_id, 0, {}, dp::kFlagAbortUnlock);
    ++tx.n_rpcs;
    if (rep.status != dp::RpcStatus::OK)
      throw std::logic_error("release_locks: unlock failed");
    e.lock_held = false;
  }
}

dp::Task<const std::vector<std::uint8_t>*> TxExecutor::add_to_read_set(
    TxContext& tx, std::uint64_t key) {
  if (tx.status != TxStatus::Active)
    throw std::logic_error("add_to_read_set: transaction not active");

  if (WriteSetEntry* w = tx.find_write(key)) co_return &w->new_value;
  if (const ReadSetEntry* r = tx.find_read(key)) co_return &r->value;

  dp::LookupResult r = co_await dp_.process_read_set_item(
      thread_, slot_, object_id_, key,
      kv::kSlotHeaderBytes + value_bytes_);
  switch (r.path) {
    case dp::LookupPath::ReadOnly:
      ++tx.n_reads;
      break;
    case dp::LookupPath::ReadThenRpc:
      ++tx.n_reads;
      ++tx.n_rpcs;
      break;
    case dp::LookupPath::RpcOnly:
      ++tx.n_rpcs;
      break;
  }

  if (!r.found) {
    // Distinguish "exists but locked by a concurrent writer" from a
    // missing key; the former is retryable.
    AbortReason reason = AbortReason::NotFound;
    if (r.slot.size() >= kv::kSlotHeaderBytes) {
      kv::SlotHeader h = kv::read_slot_header(r.slot);
      if (h.key == key && h.lock != 0) reason = AbortReason::LockBusy;
    }
    co_await release_locks(tx);
    finish(tx, TxStatus::Aborted, reason);
    co_return nullptr;
  }

  kv::SlotHeader h = kv::read_slot_header(r.slot);
  ReadSetEntry e;
  e.object_id = object_id_;
  e.key = key;
  e.region = r.region;
  e.offset = r.offset;
  e.observed_version = h.version;
  e.value.assign(r.slot.begin() + kv::kSlotHeaderBytes,
                 r.slot.begin() + kv::kSlotHeaderBytes + value_bytes_);
  tx.read_set.push_back(std::move(e));
  co_return &tx.read_set.back().value;
}

dp::Task<bool> TxExecutor::add_to_write_set(TxContext& tx, std::uint64_t key,
                                            std::vector<std::uint8_t> value) {
  if (tx.status != TxStatus::Active)
    throw std::logic_error("add_to_write_set: transaction not active");

  if (WriteSetEntry* w = tx.find_write(key)) {
    w->new_value = std::move(value);
    co_return true;
  }

  dp::RpcReply rep =
      co_await dp_.rpc_send(thread_, slot_, route(key), dp::RpcOp::LOCK_READ,
                            object_id_, key, tx.tx_id);
  ++tx.n_rpcs;
  if (rep.status != dp::RpcStatus::OK) {
    AbortReason reason = rep.status == dp::RpcStatus::LockBusy
                             ? AbortReason::LockBusy
                             : AbortReason::NotFound;
    co_await release_locks(tx);
    finish(tx, TxStatus::Aborted, reason);
    co_return false;
  }

  kv::SlotHeader h = kv::read_slot_header(rep.slot);
  // A key that was read earlier must not have advanced by lock time:
  // commit skips write-set keys during validation, so the lock-time
  // version check is what protects the earlier read.
  if (const ReadSetEntry* r = tx.find_read(key)) {
    if (r->observed_version != h.version) {
      // Undo this acquisition along with everything else held.
      WriteSetEntry e;
      e.object_id = object_id_;
      e.key = key;
      e.observed_version = h.version;
      e.lock_held = true;
      tx.write_set.push_back(std::move(e));
      co_await release_locks(tx);
      finish(tx, TxStatus::Aborted, AbortReason::ValidationFailed);
      co_return false;
    }
  }
  WriteSetEntry e;
  e.object_id = object_id_;
  e.key = key;
  e.region = rep.region;
  e.offset = rep.offset;
  e.observed_version = h.version;
  e.new_value = std::move(value);
  e.lock_held = true;
  tx.write_set.push_back(std::move(e));
  co_return true;
}

dp::Task<TxStatus> TxExecutor::commit(TxContext& tx) {
  if (tx.status != TxStatus::Active)
    throw std::logic_error("commit: transaction not active");
  tx.status = TxStatus::Validating;

  // Phase V: re-read the slot header of every read-set entry that is
  // not also written; any version change or foreign lock aborts.
  for (const auto& e : tx.read_set) {
    if (tx.in_write_set(e.key)) continue;
    ++tx.n_validation_reads;
    auto buf = co_await dp_.remote_read(thread_, slot_, e.region, e.offset,
                                        kv::kSlotHeaderBytes, route(e.key));
    bool valid = false;
    if (buf.size() >= kv::kSlotHeaderBytes) {
      kv::SlotHeader h = kv::read_slot_header(buf);
      valid = h.key == e.key && h.lock == 0 &&
              h.version == e.observed_version;
    }
    if (!valid) {
      co_await release_locks(tx);
      finish(tx, TxStatus::Aborted, AbortReason::ValidationFailed);
      co_return TxStatus::Aborted;
    }
  }

  // Phase C: install the write set and release the locks.
  for (auto& e : tx.write_set) {
    dp::RpcReply rep = co_await dp_.rpc_send(
        thread_, slot_, route(e.key), dp::RpcOp::UPDATE_UNLOCK, object_id_,
        e.key, tx.tx_id, 0, e.new_value, 0);
    ++tx.n_rpcs;
    if (rep.status != dp::RpcStatus::OK)
      throw std::logic_error("commit: update_unlock failed");
    e.lock_held = false;
  }

  finish(tx, TxStatus::Committed, AbortReason::None);
  co_return TxStatus::Committed;
}

}  // namespace stormsim::tx
