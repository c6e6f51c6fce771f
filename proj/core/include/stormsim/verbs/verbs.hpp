#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "stormsim/nic/nic.hpp"
#include "stormsim/sim/engine.hpp"

namespace stormsim::verbs {

using RegionId = std::uint32_t;
using QpId = std::uint64_t;
using CqId = std::uint32_t;
using WrId = std::uint64_t;

constexpr RegionId kInvalidRegion = std::numeric_limits<RegionId>::max();

enum class Transport : std::uint8_t { RC, UD };

enum class CompletionStatus : std::uint8_t {
  OK,
  ProtectionError,
  ReceiverNotReady,
  Disconnected,
};

const char* to_string(CompletionStatus s);

struct Completion {
  WrId wr_id = 0;
  CompletionStatus status = CompletionStatus::OK;
  std::uint32_t byte_len = 0;
  bool has_imm = false;
  std::uint32_t imm = 0;
  QpId qp = 0;          // local QP this completion belongs to
  bool is_recv = false; // receive notification vs initiator completion
  sim::SimTime timestamp = 0;
};

/// A local buffer slice inside a registered region.
struct Buffer {
  RegionId region = kInvalidRegion;
  std::uint64_t offset = 0;
  std::uint32_t len = 0;
};

/// A remote address: region ids are fabric-global, so (region, offset)
/// names bytes on whichever node owns the region.
struct RemoteTarget {
  RegionId region = kInvalidRegion;
  std::uint64_t offset = 0;
};

/// Connections under the sibling-thread scheme: one RR and one RPC
/// connection per (thread, peer machine).
constexpr std::uint64_t sibling_connection_count(std::uint64_t machines,
                                                 std::uint64_t threads) {
  return 2 * machines * threads;
}

/// The simulated RDMA fabric: every node's memory, NIC, queue pairs and
/// completion queues, plus the event pipeline that moves one-sided
/// operations through doorbell, descriptor fetch, PU service, the wire
/// and completion delivery. All latency arithmetic is delegated to the
/// nic phase helpers so closed-form totals match event timestamps.
class Fabric {
 public:
  Fabric(sim::Engine& eng, std::size_t node_count, const nic::NicConfig& cfg);

  sim::Engine& engine() { return eng_; }
  std::size_t node_count() const { return nics_.size(); }
  nic::Nic& nic(sim::NodeId node) { return *nics_[node]; }

  // --- memory ---
  /// `backed=false` registers address space without storage (for huge
  /// synthetic regions whose content is never observed); data transfers
  /// touching it skip the byte copies.
  RegionId register_region(sim::NodeId node, std::uint64_t length,
                           std::uint64_t page_size, bool physical_segment,
                           bool backed = true);
  const nic::MemoryRegionMeta& region_meta(RegionId id) const;
  sim::NodeId region_owner(RegionId id) const;
  /// Bounds-checked raw access to region bytes (setup and local
  /// handlers; remote access must go through the verbs ops).
  std::span<std::uint8_t> region_bytes(RegionId id, std::uint64_t offset,
                                       std::uint64_t len);

  // --- control path ---
  CqId create_cq(sim::NodeId node);
  QpId create_qp(sim::NodeId node, Transport transport, CqId cq);
  void connect(QpId a, QpId b);
  sim::NodeId qp_node(QpId qp) const;
  QpId qp_peer(QpId qp) const;
  std::size_t recv_queue_depth(QpId qp) const;

  // --- data path ---
  WrId post_read(QpId qp, const Buffer& local, const RemoteTarget& remote);
  WrId post_write(QpId qp, const Buffer& local, const RemoteTarget& remote);
  WrId post_write_imm(QpId qp, const Buffer& local, const RemoteTarget& remote,
                      std::uint32_t imm);
  /// UD send: data lands in the destination QP's next posted recv buffer.
  WrId post_send(QpId qp, const Buffer& local, QpId dest_qp);
  void post_recv(QpId qp, const Buffer& buf);

  std::vector<Completion> poll_cq(CqId cq, std::size_t max);
  std::size_t cq_depth(CqId cq) const;
  /// Invoked synchronously whenever a completion is pushed onto `cq`.
  void set_cq_notify(CqId cq, std::function<void()> fn);

  // --- statistics ---
  /// Four-bucket attribution summed over all completed one-sided ops,
  /// and an optional per-op sink (used by the mirroring workload).
  const nic::LatencyBreakdown& breakdown_sums() const { return breakdown_sums_; }
  std::uint64_t breakdown_ops() const { return breakdown_ops_; }
  void set_breakdown_sink(
      std::function<void(std::uint32_t payload_bytes,
                         const nic::LatencyBreakdown&)> fn) {
    breakdown_sink_ = std::move(fn);
  }
  double cache_hit_rate() const;
  std::uint64_t completions_delivered() const { return completions_; }
  std::uint64_t host_events_scheduled(sim::NodeId node) const {
    return host_events_[node];
  }
  /// Tag host-side activity (used by the remote-CPU-bypass checks).
  void count_host_event(sim::NodeId node) { ++host_events_[node]; }
  void verify_accounting() const;

 private:
  struct Region {
    nic::MemoryRegionMeta meta;
    sim::NodeId owner;
    bool backed = true;
    std::vector<std::uint8_t> bytes;
  };
  struct RecvEntry {
    WrId wr_id;
    Buffer buf;
    std::uint64_t wqe_tag;
  };
  struct Qp {
    QpId id;
    Transport transport;
    sim::NodeId node;
    CqId cq;
    std::uint64_t pu_key = 0;
    bool connected = false;
    QpId peer = 0;
    std::deque<RecvEntry> rq;
  };
  struct Cq {
    sim::NodeId node;
    std::deque<Completion> items;
    std::function<void()> notify;
  };

  enum class OpKind : std::uint8_t { Read, Write, WriteImm, UdSend };

  struct OpDesc {
    OpKind kind;
    WrId wr_id;
    QpId qp;        // initiator QP
    QpId dest_qp;   // target QP (peer for RC, explicit for UD)
    Buffer local;
    RemoteTarget remote;
    std::uint32_t imm = 0;
    std::uint32_t len = 0;
    std::vector<nic::CacheOutcome> init_outcomes;
  };

  Qp& qp_ref(QpId id);
  const Qp& qp_ref(QpId id) const;
  bool region_backed(RegionId id) const;
  void push_completion(CqId cq, Completion c);
  void start_op(OpDesc op);
  void op_at_target(OpDesc op, sim::SimTime arrival,
                    std::shared_ptr<std::vector<std::uint8_t>> staged);
  void fail_op(const OpDesc& op, sim::SimTime target_exit,
               CompletionStatus status);
  bool remote_in_bounds(const OpDesc& op) const;

  sim::Engine& eng_;
  nic::NicConfig cfg_;
  std::vector<std::unique_ptr<nic::Nic>> nics_;
  std::vector<Region> regions_;          // indexed by RegionId
  std::vector<Qp> qps_;                  // indexed by QpId
  std::vector<Cq> cqs_;                  // indexed by CqId
  std::vector<std::uint64_t> next_base_; // per-node virtual address bump
  std::vector<std::uint64_t> host_events_;
  WrId next_wr_ = 1;
  std::uint64_t next_wqe_tag_ = 1;
  std::uint64_t completions_ = 0;
  nic::LatencyBreakdown breakdown_sums_;
  std::uint64_t breakdown_ops_ = 0;
  std::function<void(std::uint32_t, const nic::LatencyBreakdown&)>
      breakdown_sink_;
};

}  // namespace stormsim::verbs
