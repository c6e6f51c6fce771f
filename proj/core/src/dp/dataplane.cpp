#include "stormsim/dp/dataplane.hpp"

#include <cassert>
#include <cstring>
#include <stdexcept>

namespace stormsim::dp {

using verbs::Buffer;
using verbs::RemoteTarget;

const char* to_string(LookupPath p) {
  switch (p) {
    case LookupPath::ReadOnly: return "read_only";
    case LookupPath::ReadThenRpc: return "read_then_rpc";
    case LookupPath::RpcOnly: return "rpc_only";
  }
  return "?";
}

std::uint32_t encode_imm(bool is_reply, std::uint32_t machine,
                         std::uint32_t slot) {
  return (is_reply ? 0x80000000u : 0u) | ((machine & 0xffffu) << 8) |
         (slot & 0xffu);
}

void decode_imm(std::uint32_t imm, bool& is_reply, std::uint32_t& machine,
                std::uint32_t& slot) {
  is_reply = (imm & 0x80000000u) != 0;
  machine = (imm >> 8) & 0xffffu;
  slot = imm & 0xffu;
}

namespace {

constexpr std::uint64_t kReqKeyOff = sizeof(WireHeader);
constexpr std::uint64_t kReqTxOff = kReqKeyOff + 8;
constexpr std::uint64_t kReqSizeOff = kReqTxOff + 8;
constexpr std::uint64_t kReqValueOff = kReqSizeOff + 8;  // 4B size + 4B pad

template <typename T>
void put(std::span<std::uint8_t> buf, std::uint64_t off, const T& v) {
  std::memcpy(buf.data() + off, &v, sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> buf, std::uint64_t off) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Cluster wiring
// ---------------------------------------------------------------------------

Cluster::Cluster(sim::Engine& eng, const nic::NicConfig& cfg,
                 std::uint32_t physical_nodes, std::uint32_t threads_per_node,
                 std::uint32_t virtual_machines, DataplaneTuning tuning)
    : eng_(eng),
      physical_(physical_nodes),
      threads_(threads_per_node),
      virtual_(virtual_machines == 0 ? physical_nodes : virtual_machines),
      tuning_(tuning) {
  if (virtual_ < physical_)
    throw std::invalid_argument("Cluster: virtual machines < physical nodes");
  if (virtual_ > 0xffff)
    throw std::invalid_argument("Cluster: too many virtual machines");
  fabric_ = std::make_unique<verbs::Fabric>(eng_, physical_, cfg);

  const std::uint64_t stride = tuning_.msg_stride;
  const std::uint64_t matrix =
      std::uint64_t(virtual_) * threads_ * tuning_.slots_per_thread * stride;
  const std::uint64_t scratch = std::uint64_t(threads_) *
                                tuning_.slots_per_thread *
                                tuning_.scratch_bytes;
  for (sim::NodeId n = 0; n < physical_; ++n) {
    req_region_.push_back(
        fabric_->register_region(n, matrix, nic::kPage2M, false));
    rep_region_.push_back(
        fabric_->register_region(n, matrix, nic::kPage2M, false));
    out_region_.push_back(fabric_->register_region(
        n, std::uint64_t(threads_) * tuning_.slots_per_thread * stride,
        nic::kPage2M, false));
    rep_out_region_.push_back(
        fabric_->register_region(n, matrix, nic::kPage2M, false));
    scratch_region_.push_back(
        fabric_->register_region(n, scratch, nic::kPage2M, false));
  }

  for (sim::NodeId n = 0; n < physical_; ++n)
    nodes_.push_back(std::make_unique<Dataplane>(*this, n));

  // Sibling mesh: for every thread and virtual peer, one read connection
  // and one RPC connection per physical client. The peer endpoint lives
  // on the node that plays that virtual machine. Read connections are
  // created in one pass and RPC connections in a second so each kind
  // occupies a contiguous NIC-local index range and spreads evenly over
  // the processing units.
  for (std::uint32_t t = 0; t < threads_; ++t) {
    for (std::uint32_t v = 0; v < virtual_; ++v) {
      for (sim::NodeId p = 0; p < physical_; ++p) {
        if (v == p) continue;  // a machine has no connection to itself
        sim::NodeId q = physical_of(v);
        Dataplane::ThreadCtx& ct = nodes_[p]->ctx(t);
        Dataplane::ThreadCtx& st = nodes_[q]->ctx(t);
        verbs::QpId c_rr = fabric_->create_qp(p, verbs::Transport::RC, ct.cq);
        verbs::QpId s_rr = fabric_->create_qp(q, verbs::Transport::RC, st.cq);
        fabric_->connect(c_rr, s_rr);
        ct.rr_qp[v] = c_rr;
      }
    }
  }
  for (std::uint32_t t = 0; t < threads_; ++t) {
    for (std::uint32_t v = 0; v < virtual_; ++v) {
      for (sim::NodeId p = 0; p < physical_; ++p) {
        if (v == p) continue;
        sim::NodeId q = physical_of(v);
        Dataplane::ThreadCtx& ct = nodes_[p]->ctx(t);
        Dataplane::ThreadCtx& st = nodes_[q]->ctx(t);
        verbs::QpId c_rpc = fabric_->create_qp(p, verbs::Transport::RC, ct.cq);
        verbs::QpId s_rpc = fabric_->create_qp(q, verbs::Transport::RC, st.cq);
        fabric_->connect(c_rpc, s_rpc);
        ct.rpc_qp[v] = c_rpc;
        std::uint32_t recvs = tuning_.credits_override
                                  ? tuning_.credits_override
                                  : tuning_.slots_per_thread;
        for (std::uint32_t r = 0; r < recvs; ++r) {
          fabric_->post_recv(s_rpc, Buffer{});
          fabric_->post_recv(c_rpc, Buffer{});
        }
        ct.credits[v] = recvs;
      }
    }
  }
}

void Cluster::spawn(Task<void> task) { task.start(); }

std::uint64_t Cluster::matrix_offset(std::uint32_t machine,
                                     std::uint32_t thread,
                                     std::uint32_t slot) const {
  return ((std::uint64_t(machine) * threads_ + thread) *
              tuning_.slots_per_thread +
          slot) *
         tuning_.msg_stride;
}

std::uint64_t Cluster::scratch_offset(std::uint32_t thread,
                                      std::uint32_t slot) const {
  return (std::uint64_t(thread) * tuning_.slots_per_thread + slot) *
         tuning_.scratch_bytes;
}

void Cluster::verify_invariants() const { fabric_->verify_accounting(); }

// ---------------------------------------------------------------------------
// Dataplane
// ---------------------------------------------------------------------------

Dataplane::Dataplane(Cluster& cluster, sim::NodeId node)
    : cluster_(cluster), node_(node) {
  threads_.resize(cluster_.threads_per_node());
  for (std::uint32_t t = 0; t < threads_.size(); ++t) {
    ThreadCtx& ctx = threads_[t];
    ctx.cq = cluster_.fabric().create_cq(node_);
    ctx.rr_qp.assign(cluster_.virtual_machines(), 0);
    ctx.rpc_qp.assign(cluster_.virtual_machines(), 0);
    ctx.credits.assign(cluster_.virtual_machines(), 0);
    ctx.credit_waiters.resize(cluster_.virtual_machines());
    ctx.pending_rpc.resize(cluster_.tuning().slots_per_thread);
    ctx.next_request_id.assign(cluster_.tuning().slots_per_thread, 0);
    cluster_.fabric().set_cq_notify(ctx.cq, [this, t]() { wake_loop(t); });
  }
}

void Dataplane::register_handler(std::uint32_t object_id,
                                 DataStructureCallbacks cbs) {
  if (handlers_.count(object_id))
    throw std::invalid_argument("register_handler: duplicate object id");
  handlers_[object_id] = std::move(cbs);
}

const DataStructureCallbacks* Dataplane::find_handler(
    std::uint32_t object_id) const {
  auto it = handlers_.find(object_id);
  return it == handlers_.end() ? nullptr : &it->second;
}

void Dataplane::wake_loop(std::uint32_t thread) {
  ThreadCtx& T = threads_[thread];
  if (T.loop_scheduled) return;
  T.loop_scheduled = true;
  cluster_.fabric().count_host_event(node_);
  cluster_.engine().schedule(0, node_, "dp.loop", [this, thread]() {
    threads_[thread].loop_scheduled = false;
    event_loop(thread);
  });
}

struct Dataplane::OpAwaiter {
  Dataplane* dp;
  std::uint32_t thread;
  verbs::WrId wr;

  bool await_ready() const noexcept { return false; }
  void await_suspend(std::coroutine_handle<> h) {
    dp->threads_[thread].pending_ops[wr].waiter = h;
  }
  verbs::CompletionStatus await_resume() {
    auto& ops = dp->threads_[thread].pending_ops;
    auto it = ops.find(wr);
    verbs::CompletionStatus st = it->second.status;
    ops.erase(it);
    return st;
  }
};

struct Dataplane::ReplyAwaiter {
  Dataplane* dp;
  std::uint32_t thread;
  std::uint32_t slot;

  bool await_ready() const noexcept { return false; }
  void await_suspend(std::coroutine_handle<> h) {
    dp->threads_[thread].pending_rpc[slot].waiter = h;
  }
  RpcReply await_resume() {
    PendingRpc& p = dp->threads_[thread].pending_rpc[slot];
    p.done = false;
    p.waiter = nullptr;
    return std::move(p.reply);
  }
};

struct Dataplane::CreditAwaiter {
  Dataplane* dp;
  std::uint32_t thread;
  std::uint32_t target;

  bool await_ready() {
    auto& T = dp->threads_[thread];
    if (T.credits[target] > 0) {
      --T.credits[target];
      return true;
    }
    return false;
  }
  void await_suspend(std::coroutine_handle<> h) {
    dp->threads_[thread].credit_waiters[target].push_back(h);
  }
  // Resumption transfers the released credit to this waiter.
  void await_resume() {}
};

Task<std::span<const std::uint8_t>> Dataplane::remote_read(
    std::uint32_t thread, std::uint32_t slot, verbs::RegionId region,
    std::uint64_t offset, std::uint32_t size, std::uint32_t virtual_peer) {
  ThreadCtx& T = threads_[thread];
  if (size > cluster_.tuning().scratch_bytes)
    throw std::invalid_argument("remote_read: larger than scratch buffer");
  std::uint32_t peer = virtual_peer;
  if (peer == kAutoPeer) peer = cluster_.fabric().region_owner(region);
  if (cluster_.physical_of(peer) == node_)
    throw std::invalid_argument("remote_read: target region is local");
  Buffer local{cluster_.scratch_region(node_),
               cluster_.scratch_offset(thread, slot), size};
  verbs::WrId wr = cluster_.fabric().post_read(T.rr_qp[peer], local,
                                               RemoteTarget{region, offset});
  verbs::CompletionStatus st = co_await OpAwaiter{this, thread, wr};
  if (st != verbs::CompletionStatus::OK)
    co_return std::span<const std::uint8_t>{};
  auto bytes = cluster_.fabric().region_bytes(
      cluster_.scratch_region(node_), cluster_.scratch_offset(thread, slot),
      size);
  co_return std::span<const std::uint8_t>{bytes.data(), bytes.size()};
}

Task<RpcReply> Dataplane::rpc_send(std::uint32_t thread, std::uint32_t slot,
                                   std::uint32_t target_machine, RpcOp op,
                                   std::uint32_t object_id, std::uint64_t key,
                                   std::uint64_t tx_id, std::uint32_t read_size,
                                   std::span<const std::uint8_t> value,
                                   std::uint8_t flags) {
  ThreadCtx& T = threads_[thread];
  if (cluster_.physical_of(target_machine) == node_)
    throw std::invalid_argument("rpc_send: target machine is this node");
  ++counters_.rpcs_issued;
  if (op == RpcOp::READ) ++counters_.read_rpcs_issued;

  co_await CreditAwaiter{this, thread, target_machine};

  const auto& tun = cluster_.tuning();
  std::uint64_t out_off =
      (std::uint64_t(thread) * tun.slots_per_thread + slot) * tun.msg_stride;
  auto out =
      cluster_.fabric().region_bytes(cluster_.out_region(node_), out_off,
                                     tun.msg_stride);
  std::fill(out.begin(), out.end(), 0);

  WireHeader h;
  h.opcode = static_cast<std::uint8_t>(op);
  h.slot = static_cast<std::uint8_t>(slot);
  h.flags = flags;
  h.machine = static_cast<std::uint8_t>(node_);
  h.thread = static_cast<std::uint8_t>(thread);
  h.request_id = ++T.next_request_id[slot];
  h.object_id = object_id;
  h.offset = target_machine;  // which virtual identity is addressed
  put(out, 0, h);
  put(out, kReqKeyOff, key);
  put(out, kReqTxOff, tx_id);
  put(out, kReqSizeOff,
      value.empty() ? read_size : static_cast<std::uint32_t>(value.size()));
  if (!value.empty())
    std::memcpy(out.data() + kReqValueOff, value.data(), value.size());

  sim::NodeId tnode = cluster_.physical_of(target_machine);
  RemoteTarget rt{cluster_.req_region(tnode),
                  cluster_.matrix_offset(node_, thread, slot)};
  T.pending_rpc[slot].target = target_machine;
  cluster_.fabric().post_write_imm(
      T.rpc_qp[target_machine],
      Buffer{cluster_.out_region(node_), out_off, tun.rpc_transfer_bytes}, rt,
      encode_imm(false, node_, slot));

  RpcReply rep = co_await ReplyAwaiter{this, thread, slot};

  // Return the credit; a queued sender inherits it directly.
  auto& waiters = T.credit_waiters[target_machine];
  if (waiters.empty()) {
    ++T.credits[target_machine];
  } else {
    auto h2 = waiters.front();
    waiters.pop_front();
    h2.resume();
  }
  co_return rep;
}

Task<LookupResult> Dataplane::process_read_set_item(std::uint32_t thread,
                                                    std::uint32_t slot,
                                                    std::uint32_t object_id,
                                                    std::uint64_t key,
                                                    std::uint32_t size) {
  const DataStructureCallbacks* cbs = find_handler(object_id);
  if (!cbs)
    throw std::invalid_argument("process_read_set_item: object unregistered");

  LookupResult r;
  bool success = false;
  bool guessed = false;

  if (!cluster_.tuning().rpc_only) {
    for (std::uint32_t attempt = 0;
         attempt < cluster_.tuning().rr_fallback_after && !success;
         ++attempt) {
      LookupStartResult g = cbs->lookup_start(object_id, key);
      if (g.region == verbs::kInvalidRegion) break;
      guessed = true;
      std::uint32_t sz = g.size ? g.size : size;
      std::uint32_t peer = cbs->route ? cbs->route(key) : kAutoPeer;
      ++counters_.reads_issued;
      auto buf = co_await remote_read(thread, slot, g.region, g.offset, sz,
                                      peer);
      if (!buf.empty()) {
        success = cbs->lookup_end(buf, key, g.region, g.offset);
        if (success) {
          r.slot.assign(buf.begin(), buf.end());
          r.region = g.region;
          r.offset = g.offset;
        }
      }
    }
  }

  if (success) {
    r.path = LookupPath::ReadOnly;
    ++counters_.path_read_only;
  } else {
    std::uint32_t owner = cbs->route ? cbs->route(key)
                                     : throw std::logic_error("no route");
    RpcReply rep = co_await rpc_send(thread, slot, owner, RpcOp::READ,
                                     object_id, key, 0, size);
    r.rpc_status = rep.status;
    if (rep.status == RpcStatus::OK || rep.status == RpcStatus::LockBusy) {
      success = cbs->lookup_end(rep.slot, key, rep.region, rep.offset);
      r.slot = std::move(rep.slot);
      r.region = rep.region;
      r.offset = rep.offset;
    } else {
      success = cbs->lookup_end({}, key, verbs::kInvalidRegion, 0);
    }
    r.path = guessed ? LookupPath::ReadThenRpc : LookupPath::RpcOnly;
    if (guessed)
      ++counters_.path_read_then_rpc;
    else
      ++counters_.path_rpc_only;
  }
  r.found = success;
  co_return r;
}

std::size_t Dataplane::event_loop(std::uint32_t thread) {
  ThreadCtx& T = threads_[thread];
  std::size_t processed = 0;
  for (const verbs::Completion& c :
       cluster_.fabric().poll_cq(T.cq, ~std::size_t{0})) {
    ++processed;
    if (c.is_recv) {
      // Inbound write-with-immediate: repost the consumed recv buffer,
      // then route the message by its immediate value.
      cluster_.fabric().post_recv(c.qp, Buffer{});
      bool is_reply;
      std::uint32_t machine, slot;
      decode_imm(c.imm, is_reply, machine, slot);
      if (is_reply)
        deliver_reply(thread, machine, slot);
      else
        deliver_request(thread, machine, slot, c.qp);
    } else {
      auto it = T.pending_ops.find(c.wr_id);
      if (it != T.pending_ops.end()) {
        it->second.status = c.status;
        it->second.done = true;
        if (it->second.waiter) it->second.waiter.resume();
      }
      // Completions nobody waits on (RPC write acks) are dropped here.
    }
  }
  return processed;
}

void Dataplane::deliver_request(std::uint32_t thread,
                                std::uint32_t sender_machine,
                                std::uint32_t slot, verbs::QpId arrival_qp) {
  ThreadCtx& T = threads_[thread];
  sim::SimTime now = cluster_.engine().now();
  sim::SimTime start = std::max(now, T.busy_until);
  T.busy_until = start + cluster_.fabric().nic(node_).config().host_rpc_ns;
  cluster_.fabric().count_host_event(node_);
  cluster_.engine().schedule(
      T.busy_until - now, node_, "dp.handler",
      [this, thread, sender_machine, slot, arrival_qp]() {
        handle_request_now(thread, sender_machine, slot, arrival_qp);
      });
}

void Dataplane::handle_request_now(std::uint32_t thread,
                                   std::uint32_t sender_machine,
                                   std::uint32_t slot,
                                   verbs::QpId arrival_qp) {
  const auto& tun = cluster_.tuning();
  auto in = cluster_.fabric().region_bytes(
      cluster_.req_region(node_),
      cluster_.matrix_offset(sender_machine, thread, slot), tun.msg_stride);
  std::span<const std::uint8_t> msg{in.data(), in.size()};

  RpcRequest req;
  req.hdr = get<WireHeader>(msg, 0);
  req.key = get<std::uint64_t>(msg, kReqKeyOff);
  req.tx_id = get<std::uint64_t>(msg, kReqTxOff);
  req.read_size = get<std::uint32_t>(msg, kReqSizeOff);
  if (req.hdr.opcode == static_cast<std::uint8_t>(RpcOp::UPDATE_UNLOCK) ||
      req.hdr.opcode == static_cast<std::uint8_t>(RpcOp::INSERT)) {
    req.value = msg.subspan(kReqValueOff, req.read_size);
  }

  RpcReply rep;
  const DataStructureCallbacks* cbs = find_handler(req.hdr.object_id);
  if (!cbs) {
    rep.status = RpcStatus::BadObject;
  } else {
    rep = cbs->rpc_handler(req);
  }

  // Serialize the reply into the per-(sender, thread, slot) staging
  // buffer and write it back over the connection it arrived on.
  std::uint64_t out_off = cluster_.matrix_offset(sender_machine, thread, slot);
  auto out = cluster_.fabric().region_bytes(cluster_.rep_out_region(node_),
                                            out_off, tun.msg_stride);
  std::fill(out.begin(), out.end(), 0);
  WireHeader h;
  h.opcode = static_cast<std::uint8_t>(RpcOp::REPLY);
  h.status = static_cast<std::uint8_t>(rep.status);
  h.slot = static_cast<std::uint8_t>(slot);
  h.machine = req.hdr.machine;
  h.thread = req.hdr.thread;
  h.request_id = req.hdr.request_id;
  h.region = rep.region;
  h.object_id = req.hdr.object_id;
  h.offset = rep.offset;
  put(out, 0, h);
  if (!rep.slot.empty())
    std::memcpy(out.data() + sizeof(WireHeader), rep.slot.data(),
                rep.slot.size());

  std::uint32_t addressed_as = static_cast<std::uint32_t>(req.hdr.offset);
  sim::NodeId client = cluster_.physical_of(sender_machine);
  RemoteTarget rt{cluster_.rep_region(client),
                  cluster_.matrix_offset(addressed_as, thread, slot)};
  cluster_.fabric().post_write_imm(
      arrival_qp,
      Buffer{cluster_.rep_out_region(node_), out_off, tun.rpc_transfer_bytes},
      rt, encode_imm(true, addressed_as, slot));
}

void Dataplane::deliver_reply(std::uint32_t thread,
                              std::uint32_t responder_machine,
                              std::uint32_t slot) {
  ThreadCtx& T = threads_[thread];
  const auto& tun = cluster_.tuning();
  auto in = cluster_.fabric().region_bytes(
      cluster_.rep_region(node_),
      cluster_.matrix_offset(responder_machine, thread, slot), tun.msg_stride);
  std::span<const std::uint8_t> msg{in.data(), in.size()};
  WireHeader h = get<WireHeader>(msg, 0);
  assert(h.request_id == T.next_request_id[slot] &&
         "reply matched to the wrong request");

  PendingRpc& p = T.pending_rpc[slot];
  p.reply.status = static_cast<RpcStatus>(h.status);
  p.reply.region = h.region;
  p.reply.offset = h.offset;
  std::uint32_t payload = tun.rpc_transfer_bytes - sizeof(WireHeader);
  p.reply.slot.assign(msg.begin() + sizeof(WireHeader),
                      msg.begin() + sizeof(WireHeader) + payload);
  p.done = true;
  if (p.waiter) p.waiter.resume();
}

}  // namespace stormsim::dp
