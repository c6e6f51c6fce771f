#pragma once

#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "stormsim/dp/task.hpp"
#include "stormsim/verbs/verbs.hpp"

namespace stormsim::dp {

enum class RpcOp : std::uint8_t {
  READ = 1,
  LOCK_READ,
  UPDATE_UNLOCK,
  INSERT,
  DELETE,
  REPLY,
};

enum class RpcStatus : std::uint8_t { OK = 0, NotFound, LockBusy, BadObject };

constexpr std::uint8_t kFlagAbortUnlock = 0x1;  // release lock, keep version

/// Fixed 24-byte message header; the region/offset pair lets replies
/// carry the object's address so clients can cache it.
struct WireHeader {
  std::uint8_t opcode = 0;
  std::uint8_t status = 0;
  std::uint8_t slot = 0;
  std::uint8_t flags = 0;
  std::uint8_t machine = 0;  // sender's virtual machine id
  std::uint8_t thread = 0;
  std::uint16_t request_id = 0;
  std::uint32_t region = 0;
  std::uint32_t object_id = 0;
  std::uint64_t offset = 0;
};
static_assert(sizeof(WireHeader) == 24);

struct RpcRequest {
  WireHeader hdr;
  std::uint64_t key = 0;
  std::uint64_t tx_id = 0;
  std::uint32_t read_size = 0;
  std::span<const std::uint8_t> value;  // UPDATE_UNLOCK / INSERT payload
};

struct RpcReply {
  RpcStatus status = RpcStatus::OK;
  verbs::RegionId region = verbs::kInvalidRegion;
  std::uint64_t offset = 0;
  std::vector<std::uint8_t> slot;  // full slot image when present
};

struct LookupStartResult {
  verbs::RegionId region = verbs::kInvalidRegion;  // kInvalidRegion == "no guess"
  std::uint64_t offset = 0;
  std::uint32_t size = 0;
};

/// The three data-structure callbacks. rpc_handler runs on the owner's
/// event loop; lookup_start/lookup_end run on the client.
struct DataStructureCallbacks {
  std::function<RpcReply(const RpcRequest&)> rpc_handler;
  std::function<LookupStartResult(std::uint32_t object_id, std::uint64_t key)>
      lookup_start;
  std::function<bool(std::span<const std::uint8_t> buffer, std::uint64_t key,
                     verbs::RegionId region, std::uint64_t offset)>
      lookup_end;
  /// Owning virtual machine of a key (partitioning of the structure).
  std::function<std::uint32_t(std::uint64_t key)> route;
};

enum class LookupPath : std::uint8_t { ReadOnly, ReadThenRpc, RpcOnly };

constexpr std::uint32_t kAutoPeer = ~std::uint32_t{0};

const char* to_string(LookupPath p);

struct LookupResult {
  bool found = false;
  LookupPath path = LookupPath::RpcOnly;
  RpcStatus rpc_status = RpcStatus::OK;  // meaningful when an RPC ran
  std::vector<std::uint8_t> slot;        // slot image (header + value)
  verbs::RegionId region = verbs::kInvalidRegion;
  std::uint64_t offset = 0;
};

struct PathCounters {
  std::uint64_t reads_issued = 0;
  std::uint64_t read_rpcs_issued = 0;
  std::uint64_t rpcs_issued = 0;  // all opcodes
  std::uint64_t path_read_only = 0;
  std::uint64_t path_read_then_rpc = 0;
  std::uint64_t path_rpc_only = 0;
};

struct DataplaneTuning {
  std::uint32_t slots_per_thread = 32;   // coroutines per thread
  std::uint32_t msg_stride = 192;        // buffer slot size, bytes
  std::uint32_t rpc_transfer_bytes = 152; // header + slot image on the wire
  std::uint32_t scratch_bytes = 4096;    // per-coroutine read buffer
  std::uint32_t credits_override = 0;    // 0: one credit per slot
  std::uint32_t rr_fallback_after = 1;   // failed reads before RPC
  bool rpc_only = false;                 // ignore lookup_start guesses
};

class Cluster;

/// Per-node dataplane: the event loop, the write-based RPC engine, the
/// data-structure callback registry and the read-set processing of the
/// one-two-sided scheme. Thread contexts within a node are independent
/// cooperative schedulers.
class Dataplane {
 public:
  Dataplane(Cluster& cluster, sim::NodeId node);

  void register_handler(std::uint32_t object_id, DataStructureCallbacks cbs);
  const DataStructureCallbacks* find_handler(std::uint32_t object_id) const;

  /// Blocking one-sided read from a coroutine: returns a view of the
  /// coroutine's scratch buffer holding the remote bytes.
  /// `virtual_peer` selects the connection (state fidelity under
  /// emulation); by default the region owner's own identity is used.
  Task<std::span<const std::uint8_t>> remote_read(
      std::uint32_t thread, std::uint32_t slot, verbs::RegionId region,
      std::uint64_t offset, std::uint32_t size,
      std::uint32_t virtual_peer = kAutoPeer);

  /// Blocking write-based RPC to the sibling thread on `target_machine`.
  Task<RpcReply> rpc_send(std::uint32_t thread, std::uint32_t slot,
                          std::uint32_t target_machine, RpcOp op,
                          std::uint32_t object_id, std::uint64_t key,
                          std::uint64_t tx_id = 0, std::uint32_t read_size = 0,
                          std::span<const std::uint8_t> value = {},
                          std::uint8_t flags = 0);

  /// Algorithm "first read, then RPC": consult lookup_start, try a
  /// remote read when there is an address guess, fall back to a READ
  /// RPC, and validate each result with lookup_end.
  Task<LookupResult> process_read_set_item(std::uint32_t thread,
                                           std::uint32_t slot,
                                           std::uint32_t object_id,
                                           std::uint64_t key,
                                           std::uint32_t size);

  /// Drain both completion queues of a thread once; returns the number
  /// of completions and inbound messages processed. Normally invoked by
  /// the engine via CQ notification.
  std::size_t event_loop(std::uint32_t thread);

  PathCounters& counters() { return counters_; }
  const PathCounters& counters() const { return counters_; }

  sim::NodeId node() const { return node_; }
  Cluster& cluster() { return cluster_; }

 private:
  friend class Cluster;
  struct PendingOp {
    std::coroutine_handle<> waiter;
    verbs::CompletionStatus status = verbs::CompletionStatus::OK;
    bool done = false;
  };
  struct PendingRpc {
    std::coroutine_handle<> waiter;
    bool done = false;
    std::uint32_t target = 0;  // virtual peer the credit was taken from
    RpcReply reply;
  };
  struct ThreadCtx {
    std::vector<verbs::QpId> rr_qp;   // indexed by virtual peer machine
    std::vector<verbs::QpId> rpc_qp;  // indexed by virtual peer machine
    verbs::CqId cq = 0;               // one CQ for sends, reads and recvs
    std::vector<std::uint32_t> credits;  // per virtual peer
    std::vector<std::deque<std::coroutine_handle<>>> credit_waiters;
    std::map<verbs::WrId, PendingOp> pending_ops;
    std::vector<PendingRpc> pending_rpc;  // indexed by slot
    std::vector<std::uint16_t> next_request_id;  // per slot
    sim::SimTime busy_until = 0;
    bool loop_scheduled = false;
  };

  ThreadCtx& ctx(std::uint32_t thread) { return threads_[thread]; }
  void wake_loop(std::uint32_t thread);
  void deliver_request(std::uint32_t thread, std::uint32_t sender_machine,
                       std::uint32_t slot, verbs::QpId arrival_qp);
  void handle_request_now(std::uint32_t thread, std::uint32_t sender_machine,
                          std::uint32_t slot, verbs::QpId arrival_qp);
  void deliver_reply(std::uint32_t thread, std::uint32_t responder_machine,
                     std::uint32_t slot);

  struct OpAwaiter;
  struct ReplyAwaiter;
  struct CreditAwaiter;

  Cluster& cluster_;
  sim::NodeId node_;
  std::vector<ThreadCtx> threads_;
  std::map<std::uint32_t, DataStructureCallbacks> handlers_;
  PathCounters counters_;
};

/// Owns the engine-facing wiring of a whole simulated cluster: nodes,
/// sibling QP meshes (2 connections per thread and virtual peer), the
/// statically allocated RPC buffer matrices and per-node dataplanes.
/// `virtual_machines` > node_count() emulates a larger cluster by
/// allocating the connection and buffer state the larger cluster would
/// have, with traffic to virtual peer v routed to node v mod physical.
class Cluster {
 public:
  Cluster(sim::Engine& eng, const nic::NicConfig& cfg,
          std::uint32_t physical_nodes, std::uint32_t threads_per_node,
          std::uint32_t virtual_machines = 0,
          DataplaneTuning tuning = DataplaneTuning{});

  sim::Engine& engine() { return eng_; }
  verbs::Fabric& fabric() { return *fabric_; }
  Dataplane& dataplane(sim::NodeId node) { return *nodes_[node]; }
  std::uint32_t physical_nodes() const { return physical_; }
  std::uint32_t virtual_machines() const { return virtual_; }
  std::uint32_t threads_per_node() const { return threads_; }
  const DataplaneTuning& tuning() const { return tuning_; }

  sim::NodeId physical_of(std::uint32_t virtual_machine) const {
    return virtual_machine % physical_;
  }

  /// Launch a workload coroutine bound to (node, thread, slot).
  void spawn(Task<void> task);

  // Buffer matrix addressing (all offsets within the owning node's
  // request/reply regions).
  std::uint64_t matrix_offset(std::uint32_t machine, std::uint32_t thread,
                              std::uint32_t slot) const;
  verbs::RegionId req_region(sim::NodeId node) const { return req_region_[node]; }
  verbs::RegionId rep_region(sim::NodeId node) const { return rep_region_[node]; }
  verbs::RegionId out_region(sim::NodeId node) const { return out_region_[node]; }
  verbs::RegionId rep_out_region(sim::NodeId node) const {
    return rep_out_region_[node];
  }
  verbs::RegionId scratch_region(sim::NodeId node) const {
    return scratch_region_[node];
  }
  std::uint64_t scratch_offset(std::uint32_t thread, std::uint32_t slot) const;

  void verify_invariants() const;

 private:
  friend class Dataplane;
  sim::Engine& eng_;
  std::unique_ptr<verbs::Fabric> fabric_;
  std::uint32_t physical_;
  std::uint32_t threads_;
  std::uint32_t virtual_;
  DataplaneTuning tuning_;
  std::vector<std::unique_ptr<Dataplane>> nodes_;
  std::vector<verbs::RegionId> req_region_, rep_region_, out_region_,
      rep_out_region_, scratch_region_;
};

std::uint32_t encode_imm(bool is_reply, std::uint32_t machine,
                         std::uint32_t slot);
void decode_imm(std::uint32_t imm, bool& is_reply, std::uint32_t& machine,
                std::uint32_t& slot);

}  // namespace stormsim::dp
