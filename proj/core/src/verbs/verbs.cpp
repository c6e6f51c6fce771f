#include "stormsim/verbs/verbs.hpp"

#include <cstring>
#include <stdexcept>

namespace stormsim::verbs {

using nic::CacheOutcome;
using nic::payload_dma_ns;
using nic::wire_serialize_ns;
using sim::SimTime;

const char* to_string(CompletionStatus s) {
  switch (s) {
    case CompletionStatus::OK: return "ok";
    case CompletionStatus::ProtectionError: return "protection_error";
    case CompletionStatus::ReceiverNotReady: return "receiver_not_ready";
    case CompletionStatus::Disconnected: return "disconnected";
  }
  return "?";
}

Fabric::Fabric(sim::Engine& eng, std::size_t node_count,
               const nic::NicConfig& cfg)
    : eng_(eng), cfg_(cfg) {
  cfg_.validate();
  nics_.reserve(node_count);
  for (std::size_t i = 0; i < node_count; ++i)
    nics_.push_back(std::make_unique<nic::Nic>(cfg_));
  next_base_.assign(node_count, 0);
  host_events_.assign(node_count, 0);
}

RegionId Fabric::register_region(sim::NodeId node, std::uint64_t length,
                                 std::uint64_t page_size,
                                 bool physical_segment, bool backed) {
  auto id = static_cast<RegionId>(regions_.size());
  std::uint64_t base =
      (next_base_[node] + page_size - 1) / page_size * page_size;
  auto meta = nics_[node]->register_region(id, base, length, page_size,
                                           physical_segment);
  next_base_[node] = base + length;
  Region r;
  r.meta = meta;
  r.owner = node;
  r.backed = backed;
  if (backed) r.bytes.assign(length, 0);
  regions_.push_back(std::move(r));
  return id;
}

double Fabric::cache_hit_rate() const {
  std::uint64_t hits = 0, misses = 0;
  for (const auto& n : nics_) {
    hits += n->cache().hits();
    misses += n->cache().misses();
  }
  std::uint64_t total = hits + misses;
  return total == 0 ? 0.0 : static_cast<double>(hits) / total;
}

const nic::MemoryRegionMeta& Fabric::region_meta(RegionId id) const {
  return regions_.at(id).meta;
}

sim::NodeId Fabric::region_owner(RegionId id) const {
  return regions_.at(id).owner;
}

std::span<std::uint8_t> Fabric::region_bytes(RegionId id, std::uint64_t offset,
                                             std::uint64_t len) {
  Region& r = regions_.at(id);
  if (!r.backed) throw std::logic_error("region_bytes: region not backed");
  if (offset + len > r.bytes.size())
    throw std::out_of_range("region_bytes: out of bounds");
  return {r.bytes.data() + offset, len};
}

CqId Fabric::create_cq(sim::NodeId node) {
  auto id = static_cast<CqId>(cqs_.size());
  cqs_.push_back(Cq{node, {}, nullptr});
  return id;
}

QpId Fabric::create_qp(sim::NodeId node, Transport transport, CqId cq) {
  if (cq >= cqs_.size()) throw std::invalid_argument("create_qp: bad cq");
  auto id = static_cast<QpId>(qps_.size());
  Qp qp;
  qp.id = id;
  qp.transport = transport;
  qp.node = node;
  qp.cq = cq;
  qp.pu_key = nics_[node]->add_qp(id);
  qps_.push_back(std::move(qp));
  return id;
}

void Fabric::connect(QpId a, QpId b) {
  Qp& qa = qp_ref(a);
  Qp& qb = qp_ref(b);
  if (qa.transport != Transport::RC || qb.transport != Transport::RC)
    throw std::invalid_argument("connect: both QPs must be RC");
  if (qa.connected || qb.connected)
    throw std::invalid_argument("connect: QP already connected");
  if (a == b) throw std::invalid_argument("connect: QP to itself");
  qa.connected = true;
  qa.peer = b;
  qb.connected = true;
  qb.peer = a;
}

sim::NodeId Fabric::qp_node(QpId qp) const { return qp_ref(qp).node; }

QpId Fabric::qp_peer(QpId qp) const {
  const Qp& q = qp_ref(qp);
  if (!q.connected) throw std::invalid_argument("qp_peer: not connected");
  return q.peer;
}

std::size_t Fabric::recv_queue_depth(QpId qp) const {
  return qp_ref(qp).rq.size();
}

Fabric::Qp& Fabric::qp_ref(QpId id) {
  if (id >= qps_.size()) throw std::invalid_argument("bad qp id");
  return qps_[id];
}

const Fabric::Qp& Fabric::qp_ref(QpId id) const {
  if (id >= qps_.size()) throw std::invalid_argument("bad qp id");
  return qps_[id];
}

bool Fabric::region_backed(RegionId id) const {
  return id < regions_.size() && regions_[id].backed;
}

void Fabric::push_completion(CqId cq, Completion c) {
  c.timestamp = eng_.now();
  Cq& q = cqs_.at(cq);
  q.items.push_back(c);
  ++completions_;
  if (q.notify) q.notify();
}

std::vector<Completion> Fabric::poll_cq(CqId cq, std::size_t max) {
  Cq& q = cqs_.at(cq);
  std::vector<Completion> out;
  while (!q.items.empty() && out.size() < max) {
    out.push_back(q.items.front());
    q.items.pop_front();
  }
  return out;
}

std::size_t Fabric::cq_depth(CqId cq) const { return cqs_.at(cq).items.size(); }

void Fabric::set_cq_notify(CqId cq, std::function<void()> fn) {
  cqs_.at(cq).notify = std::move(fn);
}

WrId Fabric::post_read(QpId qp, const Buffer& local,
                       const RemoteTarget& remote) {
  const Qp& q = qp_ref(qp);
  if (q.transport != Transport::RC || !q.connected)
    throw std::invalid_argument("post_read: QP not a connected RC QP");
  if (local.len == 0) throw std::invalid_argument("post_read: empty buffer");
  region_bytes(local.region, local.offset, local.len);  // local bounds
  OpDesc op{OpKind::Read, next_wr_++, qp, q.peer,
            local,        remote,     0,  local.len, {}};
  start_op(std::move(op));
  return next_wr_ - 1;
}

WrId Fabric::post_write(QpId qp, const Buffer& local,
                        const RemoteTarget& remote) {
  const Qp& q = qp_ref(qp);
  if (q.transport != Transport::RC || !q.connected)
    throw std::invalid_argument("post_write: QP not a connected RC QP");
  if (local.len == 0) throw std::invalid_argument("post_write: empty buffer");
  region_bytes(local.region, local.offset, local.len);
  OpDesc op{OpKind::Write, next_wr_++, qp, q.peer,
            local,         remote,     0,  local.len, {}};
  start_op(std::move(op));
  return next_wr_ - 1;
}

WrId Fabric::post_write_imm(QpId qp, const Buffer& local,
                            const RemoteTarget& remote, std::uint32_t imm) {
  const Qp& q = qp_ref(qp);
  if (q.transport != Transport::RC || !q.connected)
    throw std::invalid_argument("post_write_imm: QP not a connected RC QP");
  if (local.len == 0)
    throw std::invalid_argument("post_write_imm: empty buffer");
  region_bytes(local.region, local.offset, local.len);
  OpDesc op{OpKind::WriteImm, next_wr_++, qp,  q.peer,
            local,            remote,     imm, local.len, {}};
  start_op(std::move(op));
  return next_wr_ - 1;
}

WrId Fabric::post_send(QpId qp, const Buffer& local, QpId dest_qp) {
  const Qp& q = qp_ref(qp);
  if (q.transport != Transport::UD)
    throw std::invalid_argument("post_send: send/recv is UD-only here");
  if (qp_ref(dest_qp).transport != Transport::UD)
    throw std::invalid_argument("post_send: destination must be UD");
  if (local.len == 0) throw std::invalid_argument("post_send: empty buffer");
  region_bytes(local.region, local.offset, local.len);
  OpDesc op{OpKind::UdSend, next_wr_++, qp, dest_qp,
            local,          {},         0,  local.len, {}};
  start_op(std::move(op));
  return next_wr_ - 1;
}

void Fabric::post_recv(QpId qp, const Buffer& buf) {
  Qp& q = qp_ref(qp);
  std::uint64_t tag = next_wqe_tag_++;
  q.rq.push_back(RecvEntry{next_wr_++, buf, tag});
  if (q.transport == Transport::UD) nics_[q.node]->add_recv_wqe(tag);
}

bool Fabric::remote_in_bounds(const OpDesc& op) const {
  if (op.remote.region >= regions_.size()) return false;
  const Region& r = regions_[op.remote.region];
  return op.remote.offset + op.len <= r.meta.length_bytes;
}

/// Initiator-side pipeline: doorbell, descriptor fetch, state lookups,
/// PU service, and for writes the payload DMA read, then the wire.
void Fabric::start_op(OpDesc op) {
  sim::NodeId inode = qp_ref(op.qp).node;

  eng_.schedule(cfg_.pcie_write_ns, inode, "nic.doorbell",
                [this, op = std::move(op), inode]() mutable {
    nic::Nic& N = *nics_[inode];
    // Initiator-side state: its QP plus translation of the local buffer.
    std::vector<nic::StateKey> keys = N.op_state_keys(
        op.qp, op.local.region, op.local.offset, op.local.len);
    std::vector<CacheOutcome> outcomes;
    N.lookup(keys, outcomes);
    SimTime stage = cfg_.pu_service_ns +
                    nic::lookups_latency_ns(cfg_, outcomes);
    SimTime ready = eng_.now() + cfg_.pcie_dma_rt_ns;  // descriptor fetch
    SimTime exit_i = N.pu_admit(qp_ref(op.qp).pu_key, ready, stage);
    op.init_outcomes = std::move(outcomes);

    bool writes_out = op.kind != OpKind::Read;
    if (writes_out) {
      // DMA-read the payload from host memory, then serialize onto the
      // wire; bytes are snapshotted at the DMA time.
      SimTime sample_at = exit_i + payload_dma_ns(cfg_, op.len);
      eng_.schedule(sample_at - eng_.now(), inode, "nic.dma_rd",
                    [this, op = std::move(op)]() mutable {
        auto staged = std::make_shared<std::vector<std::uint8_t>>();
        if (region_backed(op.local.region)) {
          auto src = region_bytes(op.local.region, op.local.offset, op.len);
          staged->assign(src.begin(), src.end());
        }
        SimTime arrival = eng_.now() + wire_serialize_ns(cfg_, op.len) +
                          cfg_.wire_prop_ns;
        sim::NodeId tnode = qp_ref(op.dest_qp).node;
        eng_.schedule(arrival - eng_.now(), tnode, "nic.req",
                      [this, op = std::move(op), staged]() mutable {
          op_at_target(std::move(op), eng_.now(), staged);
        });
      });
    } else {
      SimTime arrival = exit_i + cfg_.wire_prop_ns;
      sim::NodeId tnode = qp_ref(op.dest_qp).node;
      eng_.schedule(arrival - eng_.now(), tnode, "nic.req",
                    [this, op = std::move(op)]() mutable {
        op_at_target(std::move(op), eng_.now(), nullptr);
      });
    }
  });
}

void Fabric::fail_op(const OpDesc& op, sim::SimTime target_exit,
                     CompletionStatus status) {
  SimTime done = target_exit + cfg_.wire_prop_ns + cfg_.pcie_write_ns;
  CqId icq = qp_ref(op.qp).cq;
  eng_.schedule(done - eng_.now(), qp_ref(op.qp).node, "nic.cqe",
                [this, icq, wr = op.wr_id, qp = op.qp, status]() {
    push_completion(icq, Completion{wr, status, 0, false, 0, qp, false});
  });
}

/// Target-side pipeline: state lookups and PU service, then the payload
/// DMA (read for remote reads, write for writes) and the return path.
void Fabric::op_at_target(OpDesc op, sim::SimTime arrival,
                          std::shared_ptr<std::vector<std::uint8_t>> staged) {
  Qp& dst = qp_ref(op.dest_qp);
  nic::Nic& T = *nics_[dst.node];

  if (op.kind == OpKind::UdSend) {
    // Data lands in the next posted recv buffer; its WQE and the buffer
    // region's translation entries are the state touched here.
    std::vector<nic::StateKey> keys;
    keys.push_back(
        nic::StateKey{nic::StateKind::QP, op.dest_qp, nic::kQpStateBytes});
    if (!dst.rq.empty()) {
      const RecvEntry& re = dst.rq.front();
      keys.push_back(nic::StateKey{nic::StateKind::RECV_WQE, re.wqe_tag,
                                   cfg_.recv_wqe_bytes});
      auto more = T.op_state_keys(op.dest_qp, re.buf.region, re.buf.offset,
                                  op.len);
      keys.insert(keys.end(), more.begin() + 1, more.end());  // skip dup QP
    }
    std::vector<CacheOutcome> outcomes;
    T.lookup(keys, outcomes);
    SimTime stage = cfg_.pu_service_ns + nic::lookups_latency_ns(cfg_, outcomes);
    SimTime exit_t = T.pu_admit(dst.pu_key, arrival, stage);
    if (dst.rq.empty() || dst.rq.front().buf.len < op.len) {
      fail_op(op, exit_t, CompletionStatus::ReceiverNotReady);
      return;
    }
    RecvEntry re = dst.rq.front();
    dst.rq.pop_front();
    SimTime deliver = exit_t + payload_dma_ns(cfg_, op.len);
    eng_.schedule(deliver - eng_.now(), dst.node, "nic.dma_wr",
                  [this, op, re, staged, tnode = dst.node]() {
      if (staged && !staged->empty() && region_backed(re.buf.region)) {
        auto out = region_bytes(re.buf.region, re.buf.offset, op.len);
        std::memcpy(out.data(), staged->data(), op.len);
      }
      nics_[tnode]->consume_recv_wqe(re.wqe_tag);
      CqId tcq = qp_ref(op.dest_qp).cq;
      eng_.schedule(cfg_.pcie_write_ns, tnode, "nic.cqe",
                    [this, tcq, re, op]() {
        push_completion(tcq, Completion{re.wr_id, CompletionStatus::OK, op.len,
                                        false, 0, op.dest_qp, true});
      });
    });
    // Sender-side completion is local: the NIC is done once the payload
    // left; no transport-level ack in UD.
    CqId icq = qp_ref(op.qp).cq;
    eng_.schedule(cfg_.pcie_write_ns, qp_ref(op.qp).node, "nic.cqe",
                  [this, icq, op]() {
      push_completion(icq, Completion{op.wr_id, CompletionStatus::OK, op.len,
                                      false, 0, op.qp, false});
    });
    return;
  }

  // RC one-sided: translation and protection of the remote target.
  std::vector<nic::StateKey> keys = T.op_state_keys(
      op.dest_qp, op.remote.region, op.remote.offset, op.len);
  std::vector<CacheOutcome> outcomes;
  T.lookup(keys, outcomes);
  SimTime stage = cfg_.pu_service_ns + nic::lookups_latency_ns(cfg_, outcomes);
  SimTime exit_t = T.pu_admit(dst.pu_key, arrival, stage);

  if (!remote_in_bounds(op)) {
    fail_op(op, exit_t, CompletionStatus::ProtectionError);
    return;
  }

  {
    std::vector<CacheOutcome> all = op.init_outcomes;
    all.insert(all.end(), outcomes.begin(), outcomes.end());
    nic::OneSidedOp shape = op.kind == OpKind::Read
                                ? nic::OneSidedOp::Read
                                : (op.kind == OpKind::WriteImm
                                       ? nic::OneSidedOp::WriteImm
                                       : nic::OneSidedOp::Write);
    nic::LatencyBreakdown bd = nic::compute_breakdown(cfg_, shape, op.len, all);
    breakdown_sums_ += bd;
    ++breakdown_ops_;
    if (breakdown_sink_) breakdown_sink_(op.len, bd);
  }

  if (op.kind == OpKind::Read) {
    SimTime sample_at = exit_t + payload_dma_ns(cfg_, op.len);
    eng_.schedule(sample_at - eng_.now(), dst.node, "nic.dma_rd",
                  [this, op]() {
      auto staged = std::make_shared<std::vector<std::uint8_t>>();
      if (region_backed(op.remote.region)) {
        auto src = region_bytes(op.remote.region, op.remote.offset, op.len);
        staged->assign(src.begin(), src.end());
      }
      SimTime done = eng_.now() + cfg_.wire_prop_ns +
                     wire_serialize_ns(cfg_, op.len) +
                     payload_dma_ns(cfg_, op.len) + cfg_.pcie_write_ns;
      sim::NodeId inode = qp_ref(op.qp).node;
      eng_.schedule(done - eng_.now(), inode, "nic.cqe",
                    [this, op, staged]() {
        if (!staged->empty() && region_backed(op.local.region)) {
          auto out = region_bytes(op.local.region, op.local.offset, op.len);
          std::memcpy(out.data(), staged->data(), op.len);
        }
        CqId icq = qp_ref(op.qp).cq;
        push_completion(icq, Completion{op.wr_id, CompletionStatus::OK, op.len,
                                        false, 0, op.qp, false});
      });
    });
    return;
  }

  // Write / WriteImm: a write-with-immediate consumes a recv WQE to
  // produce the receive-side notification.
  if (op.kind == OpKind::WriteImm && dst.rq.empty()) {
    fail_op(op, exit_t, CompletionStatus::ReceiverNotReady);
    return;
  }
  RecvEntry re{};
  if (op.kind == OpKind::WriteImm) {
    re = dst.rq.front();
    dst.rq.pop_front();
  }
  SimTime install_at = exit_t + payload_dma_ns(cfg_, op.len);
  eng_.schedule(install_at - eng_.now(), dst.node, "nic.dma_wr",
                [this, op, re, staged, tnode = dst.node]() {
    if (staged && !staged->empty() && region_backed(op.remote.region)) {
      auto out = region_bytes(op.remote.region, op.remote.offset, op.len);
      std::memcpy(out.data(), staged->data(), op.len);
    }
    if (op.kind == OpKind::WriteImm) {
      CqId tcq = qp_ref(op.dest_qp).cq;
      eng_.schedule(cfg_.pcie_write_ns, tnode, "nic.cqe",
                    [this, tcq, re, op]() {
        push_completion(tcq, Completion{re.wr_id, CompletionStatus::OK, op.len,
                                        true, op.imm, op.dest_qp, true});
      });
    }
    // Transport-level ack back to the initiator.
    SimTime done = eng_.now() + cfg_.wire_prop_ns + cfg_.pcie_write_ns;
    sim::NodeId inode = qp_ref(op.qp).node;
    eng_.schedule(done - eng_.now(), inode, "nic.cqe", [this, op]() {
      CqId icq = qp_ref(op.qp).cq;
      push_completion(icq, Completion{op.wr_id, CompletionStatus::OK, op.len,
                                      false, 0, op.qp, false});
    });
  });
}

void Fabric::verify_accounting() const {
  for (const auto& n : nics_) n->verify_accounting();
}

}  // namespace stormsim::verbs
