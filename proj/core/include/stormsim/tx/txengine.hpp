#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stormsim/dp/dataplane.hpp"
#include "stormsim/kv/slot.hpp"

namespace stormsim::tx {

enum class TxStatus : std::uint8_t { Active, Validating, Committed, Aborted };

enum class AbortReason : std::uint8_t {
  None,
  LockBusy,
  ValidationFailed,
  NotFound,
};

const char* to_string(TxStatus s);
const char* to_string(AbortReason r);

struct ReadSetEntry {
  std::uint32_t object_id;
  std::uint64_t key;
  verbs::RegionId region;
  std::uint64_t offset;
  std::uint64_t observed_version;
  std::vector<std::uint8_t> value;
};

struct WriteSetEntry {
  std::uint32_t object_id;
  std::uint64_t key;
  verbs::RegionId region;
  std::uint64_t offset;
  std::uint64_t observed_version;
  std::vector<std::uint8_t> new_value;
  bool lock_held = false;
};

struct TxContext {
  std::uint64_t tx_id = 0;
  TxStatus status = TxStatus::Active;
  AbortReason reason = AbortReason::None;
  std::vector<ReadSetEntry> read_set;
  std::vector<WriteSetEntry> write_set;
  std::uint32_t n_reads = 0;
  std::uint32_t n_rpcs = 0;
  std::uint32_t n_validation_reads = 0;
  sim::SimTime started_at = 0;
  sim::SimTime finished_at = 0;

  const ReadSetEntry* find_read(std::uint64_t key) const;
  WriteSetEntry* find_write(std::uint64_t key);
  bool in_write_set(std::uint64_t key) const;
};

/// One line per finished transaction, consumed by the serializability
/// oracle and exported as the per-run transaction trace.
struct TxRecord {
  std::uint64_t tx_id = 0;
  TxStatus status = TxStatus::Aborted;
  AbortReason reason = AbortReason::None;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> reads;   // key, version
  std::vector<std::pair<std::uint64_t, std::uint64_t>> writes;  // key, version
  std::vector<std::vector<std::uint8_t>> write_values;
  std::uint32_t n_reads = 0;
  std::uint32_t n_rpcs = 0;
  std::uint32_t n_validation_reads = 0;
  sim::SimTime latency_ns = 0;
};

std::string tx_trace_csv(const std::vector<TxRecord>& records);

/// Executes Storm transactions from one coroutine: OCC with write-set
/// locking during execution, read-set validation via header-only remote
/// reads, and commit via update-and-unlock RPCs.
class TxExecutor {
 public:
  TxExecutor(dp::Dataplane& dp, std::uint32_t thread, std::uint32_t slot,
             std::uint32_t object_id, std::uint32_t value_bytes);

  TxContext start_tx();

  /// Reads through the one-two-sided path and records offset/version.
  /// Returns nullptr when the transaction aborted (NotFound/LockBusy).
  dp::Task<const std::vector<std::uint8_t>*> add_to_read_set(
      TxContext& tx, std::uint64_t key);

  /// Locks the key at its owner and buffers the new value locally.
  /// Returns false when the transaction aborted.
  dp::Task<bool> add_to_write_set(TxContext& tx, std::uint64_t key,
                                  std::vector<std::uint8_t> new_value);

  dp::Task<TxStatus> commit(TxContext& tx);

  std::vector<TxRecord>& records() { return records_; }
  std::uint64_t committed() const { return committed_; }
  std::uint64_t aborted() const { return aborted_; }

 private:
  dp::Task<void> release_locks(TxContext& tx);
  void finish(TxContext& tx, TxStatus status, AbortReason reason);
  std::uint32_t route(std::uint64_t key) const;

  dp::Dataplane& dp_;
  std::uint32_t thread_;
  std::uint32_t slot_;
  std::uint32_t object_id_;
  std::uint32_t value_bytes_;
  std::uint64_t next_local_ = 0;
  bool active_ = false;
  std::vector<TxRecord> records_;
  std::uint64_t committed_ = 0;
  std::uint64_t aborted_ = 0;
};

}  // namespace stormsim::tx
