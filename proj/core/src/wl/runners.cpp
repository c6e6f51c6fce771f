#include "stormsim/wl/runners.hpp"

#include <algorithm>
#include <memory>
#include <sstream>

namespace stormsim::wl {

namespace {

std::uint64_t percentile(std::vector<std::uint64_t>& v, double p) {
  if (v.empty()) return 0;
  std::size_t idx = static_cast<std::size_t>(p * (v.size() - 1));
  std::nth_element(v.begin(), v.begin() + idx, v.end());
  return v[idx];
}

std::vector<std::uint8_t> value_for(std::uint64_t key, std::uint64_t salt,
                                    std::uint32_t value_bytes) {
  std::vector<std::uint8_t> v(value_bytes);
  std::uint64_t x = kv::hash64(key ^ salt);
  for (std::uint32_t i = 0; i < value_bytes; ++i) {
    x = kv::hash64(x + i);
    v[i] = static_cast<std::uint8_t>(x);
  }
  return v;
}

/// Shared measurement state for coroutine-driven runs.
struct Progress {
  std::uint64_t target_total = 0;
  std::uint64_t warmup = 0;
  std::uint64_t completed = 0;
  std::uint64_t measured = 0;
  sim::SimTime measure_start = 0;
  sim::SimTime last_completion = 0;
  std::uint64_t live_coroutines = 0;
  std::vector<std::uint64_t> latencies;

  void record(sim::Engine& eng, sim::SimTime op_latency) {
    ++completed;
    last_completion = eng.now();
    if (completed == warmup) measure_start = eng.now();
    if (completed > warmup) {
      ++measured;
      latencies.push_back(op_latency);
    }
  }
};

struct KvRunState {
  dp::Cluster* cluster;
  kv::DistributedKv* kvs;
  Progress progress;
  std::uint64_t aborted = 0;
  std::uint64_t lost = 0;
  std::vector<std::unique_ptr<tx::TxExecutor>> executors;
};

/// Remote key helper: redraw until the key's partition is not local.
std::uint64_t remote_key(const KvRunState& st, sim::NodeId node,
                         std::uint64_t key, std::uint64_t key_count,
                         sim::SeededRng& rng) {
  while (st.cluster->physical_of(st.kvs->owner_of(key)) == node)
    key = rng.next_range(1, key_count);
  return key;
}

dp::Task<void> kv_lookup_coroutine(KvRunState* st, sim::NodeId node,
                                   std::uint32_t thread, std::uint32_t slot,
                                   std::vector<Op> ops, std::uint64_t key_count,
                                   std::uint64_t rng_tag) {
  sim::SeededRng rng = sim::SeededRng(rng_tag).substream(0xbeef);
  sim::Engine& eng = st->cluster->engine();
  dp::Dataplane& d = st->cluster->dataplane(node);
  std::uint32_t size = st->kvs->read_size();
  for (const Op& op : ops) {
    std::uint64_t key = remote_key(*st, node, op.key, key_count, rng);
    sim::SimTime t0 = eng.now();
    dp::LookupResult r = co_await d.process_read_set_item(
        thread, slot, st->kvs->object_id(), key, size);
    if (!r.found) ++st->lost;
    st->progress.record(eng, eng.now() - t0);
  }
  --st->progress.live_coroutines;
}

dp::Task<void> tatp_coroutine(KvRunState* st, sim::NodeId node,
                              std::uint32_t thread, std::uint32_t slot,
                              std::vector<Op> ops, std::uint64_t key_count,
                              std::uint64_t rng_tag,
                              tx::TxExecutor* exec) {
  sim::SeededRng rng = sim::SeededRng(rng_tag).substream(0xfeed);
  sim::Engine& eng = st->cluster->engine();
  dp::Dataplane& d = st->cluster->dataplane(node);
  std::uint32_t object = st->kvs->object_id();
  std::uint32_t value_bytes = st->kvs->table(0).config().value_bytes;
  // Inserts and deletes churn a dedicated row range above the preloaded
  // keys (call-forwarding style), so reads never chase deleted rows.
  std::uint64_t churn_lo = key_count + 1;
  std::uint64_t churn_hi = key_count + std::max<std::uint64_t>(key_count / 4, 16);

  for (const Op& op : ops) {
    std::uint64_t key;
    if (op.kind == OpKind::Insert || op.kind == OpKind::Delete) {
      key = churn_lo + op.key % (churn_hi - churn_lo + 1);
      while (st->cluster->physical_of(st->kvs->owner_of(key)) == node)
        key = churn_lo + rng.next_below(churn_hi - churn_lo + 1);
    } else {
      key = remote_key(*st, node, op.key, key_count, rng);
    }
    sim::SimTime t0 = eng.now();
    switch (op.kind) {
      case OpKind::Read: {
        tx::TxContext tx = exec->start_tx();
        auto* v = co_await exec->add_to_read_set(tx, key);
        if (v) co_await exec->commit(tx);
        if (tx.status != tx::TxStatus::Committed) ++st->aborted;
        break;
      }
      case OpKind::Write: {
        tx::TxContext tx = exec->start_tx();
        auto* v = co_await exec->add_to_read_set(tx, key);
        if (v) {
          bool ok = co_await exec->add_to_write_set(
              tx, key, value_for(key, eng.now(), value_bytes));
          if (ok) co_await exec->commit(tx);
        }
        if (tx.status != tx::TxStatus::Committed) ++st->aborted;
        break;
      }
      case OpKind::Insert: {
        auto val = value_for(key, eng.now() ^ 0x1234, value_bytes);
        dp::RpcReply rep = co_await d.rpc_send(
            thread, slot, st->kvs->owner_of(key), dp::RpcOp::INSERT, object,
            key, 0, 0, val);
        if (rep.status == dp::RpcStatus::OK) {
          kv::SlotHeader h = kv::read_slot_header(rep.slot);
          tx::TxRecord rec;
          rec.tx_id = (0xAull << 60) | (std::uint64_t(node) << 48) |
                      (std::uint64_t(thread) << 40) |
                      (std::uint64_t(slot) << 32) | st->progress.completed;
          rec.status = tx::TxStatus::Committed;
          rec.writes.emplace_back(key, h.version);
          rec.write_values.push_back(val);
          exec->records().push_back(std::move(rec));
        } else {
          ++st->aborted;
        }
        break;
      }
      case OpKind::Delete: {
        dp::RpcReply rep = co_await d.rpc_send(
            thread, slot, st->kvs->owner_of(key), dp::RpcOp::DELETE, object,
            key);
        if (rep.status == dp::RpcStatus::NotFound) break;  // benign no-op
        if (rep.status == dp::RpcStatus::OK) {
          kv::SlotHeader h = kv::read_slot_header(rep.slot);
          tx::TxRecord rec;
          rec.tx_id = (0xDull << 60) | (std::uint64_t(node) << 48) |
                      (std::uint64_t(thread) << 40) |
                      (std::uint64_t(slot) << 32) | st->progress.completed;
          rec.status = tx::TxStatus::Committed;
          rec.writes.emplace_back(key, h.version + 1);
          rec.write_values.push_back({});  // tombstone
          exec->records().push_back(std::move(rec));
        } else {
          ++st->aborted;
        }
        break;
      }
    }
    st->progress.record(eng, eng.now() - t0);
  }
  --st->progress.live_coroutines;
}

RunMetrics run_kv_like(const KvRunConfig& cfg, bool transactional) {
  cfg.spec.validate();
  sim::Engine eng;
  std::ostringstream log;
  if (cfg.capture_event_log) eng.set_event_log(&log);

  dp::DataplaneTuning tuning;
  tuning.slots_per_thread = cfg.spec.coroutines_per_thread;
  tuning.rpc_only = cfg.rpc_only;
  dp::Cluster cluster(eng, cfg.nic, cfg.spec.n_nodes,
                      cfg.spec.threads_per_node, cfg.virtual_machines, tuning);

  kv::TableConfig table = cfg.table;
  std::uint64_t per_node =
      cfg.spec.key_count / cluster.physical_nodes() + 1;
  table.n_buckets =
      kv::buckets_for(per_node, cfg.occupancy_target, table.bucket_width);
  kv::DistributedKv kvs(cluster, 1, table);

  RunMetrics m;
  for (std::uint64_t k = 1; k <= cfg.spec.key_count; ++k) {
    auto v = value_for(k, 0, table.value_bytes);
    kvs.preload(k, v);
    if (transactional) m.initial_store.push_back(StoreEntry{k, 1, v});
  }

  std::uint32_t streams = cfg.spec.n_nodes * cfg.spec.threads_per_node *
                          cfg.spec.coroutines_per_thread;
  auto ops = generate(cfg.spec, streams);

  KvRunState st;
  st.cluster = &cluster;
  st.kvs = &kvs;
  st.progress.target_total = cfg.spec.op_count;
  st.progress.warmup =
      static_cast<std::uint64_t>(cfg.warmup_frac * cfg.spec.op_count);
  st.progress.live_coroutines = streams;

  std::uint32_t s = 0;
  for (sim::NodeId n = 0; n < cfg.spec.n_nodes; ++n) {
    for (std::uint32_t t = 0; t < cfg.spec.threads_per_node; ++t) {
      for (std::uint32_t c = 0; c < cfg.spec.coroutines_per_thread; ++c, ++s) {
        std::uint64_t tag = cfg.spec.seed ^ (0x51ull << 56) ^ s;
        if (transactional) {
          st.executors.push_back(std::make_unique<tx::TxExecutor>(
              cluster.dataplane(n), t, c, kvs.object_id(),
              table.value_bytes));
          cluster.spawn(tatp_coroutine(&st, n, t, c, std::move(ops[s]),
                                       cfg.spec.key_count, tag,
                                       st.executors.back().get()));
        } else {
          cluster.spawn(kv_lookup_coroutine(&st, n, t, c, std::move(ops[s]),
                                            cfg.spec.key_count, tag));
        }
      }
    }
  }

  eng.run();
  if (st.progress.live_coroutines != 0)
    throw std::logic_error("run: coroutines stalled (lost completions?)");
  cluster.verify_invariants();

  if (transactional) {
    m.leaked_locks = kvs.total_locked_slots();
    for (sim::NodeId n = 0; n < cluster.physical_nodes(); ++n) {
      kvs.table(n).walk([&](std::uint64_t key, const kv::SlotHeader& h,
                            std::span<const std::uint8_t> value,
                            std::uint64_t) {
        m.final_store.push_back(
            StoreEntry{key, h.version,
                       std::vector<std::uint8_t>(value.begin(), value.end())});
      });
      for (const auto& [key, floor] : kvs.table(n).version_floors())
        m.version_floors[key] =
            std::max(m.version_floors[key], floor);
    }
  }

  m.total_ops = st.progress.completed;
  m.ops = st.progress.measured;
  m.duration_ns = st.progress.last_completion - st.progress.measure_start;
  m.node_count = cfg.spec.n_nodes;
  m.connections =
      verbs::sibling_connection_count(cluster.virtual_machines(),
                                      cfg.spec.threads_per_node);
  if (m.duration_ns > 0)
    m.throughput_ops_per_us_per_machine =
        static_cast<double>(m.ops) * 1000.0 /
        static_cast<double>(m.duration_ns) / cfg.spec.n_nodes;
  m.p50_latency_ns = percentile(st.progress.latencies, 0.50);
  m.p99_latency_ns = percentile(st.progress.latencies, 0.99);
  m.abort_rate = st.progress.completed
                     ? static_cast<double>(st.aborted) / st.progress.completed
                     : 0.0;
  m.cache_hit_rate = cluster.fabric().cache_hit_rate();
  for (sim::NodeId n = 0; n < cfg.spec.n_nodes; ++n) {
    const dp::PathCounters& pc = cluster.dataplane(n).counters();
    m.paths.reads_issued += pc.reads_issued;
    m.paths.read_rpcs_issued += pc.read_rpcs_issued;
    m.paths.rpcs_issued += pc.rpcs_issued;
    m.paths.path_read_only += pc.path_read_only;
    m.paths.path_read_then_rpc += pc.path_read_then_rpc;
    m.paths.path_rpc_only += pc.path_rpc_only;
  }
  m.bucket_sums = cluster.fabric().breakdown_sums();
  m.bucket_ops = cluster.fabric().breakdown_ops();
  for (auto& ex : st.executors) {
    auto& rec = ex->records();
    m.tx_records.insert(m.tx_records.end(),
                        std::make_move_iterator(rec.begin()),
                        std::make_move_iterator(rec.end()));
  }
  if (cfg.capture_event_log) m.event_log = log.str();
  return m;
}

}  // namespace

RunMetrics run_kv_lookups(const KvRunConfig& cfg) {
  return run_kv_like(cfg, false);
}

RunMetrics run_tatp(const KvRunConfig& cfg) { return run_kv_like(cfg, true); }

// ---------------------------------------------------------------------------
// Random reads (connection scaling)
// ---------------------------------------------------------------------------

namespace {

struct ReadDriver {
  verbs::Fabric* fabric = nullptr;
  sim::Engine* eng = nullptr;
  RandomReadsConfig cfg;
  verbs::RegionId data_region = 0;
  verbs::RegionId scratch_region = 0;
  verbs::CqId cq = 0;
  std::vector<verbs::QpId> qps;
  std::vector<std::unique_ptr<sim::SeededRng>> rng;
  std::unordered_map<verbs::WrId, std::uint32_t> outstanding;  // wr -> conn
  std::uint64_t completed = 0;
  std::uint64_t issued = 0;
  std::uint64_t target = 0;
  sim::SimTime measure_start = 0;
  std::uint64_t measured_at_start = 0;
  bool draining = false;

  void issue(std::uint32_t conn) {
    std::uint64_t span = cfg.data_bytes - cfg.read_bytes;
    std::uint64_t off = rng[conn]->next_below(span) & ~std::uint64_t{63};
    verbs::Buffer local{scratch_region,
                        std::uint64_t(conn) * cfg.read_bytes, cfg.read_bytes};
    verbs::WrId wr =
        fabric->post_read(qps[conn], local,
                          verbs::RemoteTarget{data_region, off});
    outstanding[wr] = conn;
    ++issued;
  }

  void on_notify() {
    for (const verbs::Completion& c : fabric->poll_cq(cq, ~std::size_t{0})) {
      auto it = outstanding.find(c.wr_id);
      std::uint32_t conn = it->second;
      outstanding.erase(it);
      ++completed;
      if (completed == cfg.warmup_ops) {
        measure_start = eng->now();
        measured_at_start = completed;
      }
      if (!draining && issued < target) issue(conn);
      if (completed >= target) draining = true;
    }
  }
};

}  // namespace

double run_random_reads(const RandomReadsConfig& cfg) {
  sim::Engine eng;
  verbs::Fabric fabric(eng, 2, cfg.nic);

  ReadDriver drv;
  drv.fabric = &fabric;
  drv.eng = &eng;
  drv.cfg = cfg;
  drv.target = cfg.warmup_ops + cfg.measure_ops;

  // The per-connection window is held at min_depth once the budget
  // divides below it, so state locality does not shift with N in the
  // high-connection-count regime.
  std::uint32_t depth = std::min(
      cfg.max_depth_per_conn,
      std::max(cfg.min_depth_per_conn,
               cfg.total_outstanding_budget / cfg.connections));

  // Target node owns the data; content is never inspected, so the
  // region carries no backing storage.
  drv.data_region =
      fabric.register_region(1, cfg.data_bytes, cfg.page_size, false, false);
  drv.scratch_region = fabric.register_region(
      0, std::uint64_t(cfg.connections) * cfg.read_bytes, nic::kPage2M, false);
  drv.cq = fabric.create_cq(0);
  verbs::CqId peer_cq = fabric.create_cq(1);

  sim::SeededRng root(cfg.seed);
  for (std::uint32_t i = 0; i < cfg.connections; ++i) {
    verbs::QpId a = fabric.create_qp(0, verbs::Transport::RC, drv.cq);
    verbs::QpId b = fabric.create_qp(1, verbs::Transport::RC, peer_cq);
    fabric.connect(a, b);
    drv.qps.push_back(a);
    drv.rng.push_back(std::make_unique<sim::SeededRng>(root.substream(i + 1)));
  }

  fabric.set_cq_notify(drv.cq, [&drv]() { drv.on_notify(); });

  for (std::uint32_t i = 0; i < cfg.connections; ++i)
    for (std::uint32_t d = 0; d < depth && drv.issued < drv.target; ++d)
      drv.issue(i);

  eng.run();

  if (drv.completed < drv.target)
    throw std::logic_error("random_reads: lost completions");
  sim::SimTime window = eng.now() - drv.measure_start;
  if (window == 0) return 0;
  return static_cast<double>(drv.completed - drv.measured_at_start) * 1000.0 /
         static_cast<double>(window);
}

double connection_scaling_drop(const nic::NicConfig& nic, std::uint32_t lo,
                               std::uint32_t hi) {
  RandomReadsConfig cfg;
  cfg.nic = nic;
  cfg.connections = lo;
  double t_lo = run_random_reads(cfg);
  cfg.connections = hi;
  double t_hi = run_random_reads(cfg);
  return 1.0 - t_hi / t_lo;
}

// ---------------------------------------------------------------------------
// Synchronous mirroring
// ---------------------------------------------------------------------------

namespace {

struct MirrorDriver {
  verbs::Fabric* fabric = nullptr;
  sim::Engine* eng = nullptr;
  verbs::RegionId src = 0, dst = 0;
  verbs::CqId cq = 0;
  verbs::QpId qp = 0;
  std::vector<std::uint32_t> sizes;  // cachelines per message
  std::size_t next = 0;
  sim::SimTime post_time = 0;
  std::vector<std::uint64_t>* latencies = nullptr;

  void post_next() {
    if (next >= sizes.size()) return;
    std::uint32_t bytes = sizes[next] * nic::kCachelineBytes;
    ++next;
    post_time = eng->now();
    fabric->post_write(qp, verbs::Buffer{src, 0, bytes},
                       verbs::RemoteTarget{dst, 0});
  }
  void on_notify() {
    for (const verbs::Completion& c : fabric->poll_cq(cq, ~std::size_t{0})) {
      (void)c;
      latencies->push_back(eng->now() - post_time);
      post_next();
    }
  }
};

}  // namespace

MirroringResult run_sync_mirroring(const nic::NicConfig& nic,
                                   const WorkloadSpec& spec) {
  spec.sizes.validate();
  sim::Engine eng;
  verbs::Fabric fabric(eng, 2, nic);

  MirroringResult result;
  MirrorDriver drv;
  drv.fabric = &fabric;
  drv.eng = &eng;
  std::uint64_t max_bytes = 256 * nic::kCachelineBytes;
  drv.src = fabric.register_region(0, max_bytes, nic::kPage2M, false);
  drv.dst = fabric.register_region(1, max_bytes, nic::kPage2M, false);
  drv.cq = fabric.create_cq(0);
  verbs::CqId peer_cq = fabric.create_cq(1);
  drv.qp = fabric.create_qp(0, verbs::Transport::RC, drv.cq);
  verbs::QpId b = fabric.create_qp(1, verbs::Transport::RC, peer_cq);
  fabric.connect(drv.qp, b);

  sim::SeededRng rng(spec.seed);
  for (std::uint64_t i = 0; i < spec.op_count; ++i)
    drv.sizes.push_back(spec.sizes.sample(rng));

  std::vector<std::uint64_t> lats;
  drv.latencies = &lats;

  fabric.set_breakdown_sink(
      [&result](std::uint32_t payload, const nic::LatencyBreakdown& bd) {
        result.messages.push_back(
            MirroringRecord{payload / nic::kCachelineBytes, bd});
      });
  fabric.set_cq_notify(drv.cq, [&drv]() { drv.on_notify(); });

  drv.post_next();
  eng.run();

  RunMetrics& m = result.metrics;
  m.ops = lats.size();
  m.total_ops = lats.size();
  m.duration_ns = eng.now();
  m.node_count = 2;
  m.p50_latency_ns = percentile(lats, 0.50);
  m.p99_latency_ns = percentile(lats, 0.99);
  m.bucket_sums = fabric.breakdown_sums();
  m.bucket_ops = fabric.breakdown_ops();
  m.cache_hit_rate = fabric.cache_hit_rate();

  sim::SimTime total = m.bucket_sums.total();
  if (total > 0)
    result.pcie_share =
        static_cast<double>(m.bucket_sums.pcie_const + m.bucket_sums.pcie_var) /
        static_cast<double>(total);
  return result;
}

// ---------------------------------------------------------------------------
// Cluster emulation
// ---------------------------------------------------------------------------

namespace {

struct EmuState {
  dp::Cluster* cluster;
  kv::DistributedKv* kvs;
  Progress progress;
};

dp::Task<void> emu_coroutine(EmuState* st, sim::NodeId node,
                             std::uint32_t thread, std::uint32_t slot,
                             std::uint64_t ops, std::uint64_t key_count,
                             std::uint64_t rng_tag) {
  sim::SeededRng rng(rng_tag);
  sim::Engine& eng = st->cluster->engine();
  dp::Dataplane& d = st->cluster->dataplane(node);
  std::uint32_t size = st->kvs->read_size();
  for (std::uint64_t i = 0; i < ops; ++i) {
    std::uint64_t key = rng.next_range(1, key_count);
    while (st->cluster->physical_of(st->kvs->owner_of(key)) == node)
      key = rng.next_range(1, key_count);
    sim::SimTime t0 = eng.now();
    dp::LookupResult r = co_await d.process_read_set_item(
        thread, slot, st->kvs->object_id(), key, size);
    (void)r;
    st->progress.record(eng, eng.now() - t0);
  }
  --st->progress.live_coroutines;
}

}  // namespace

double run_emulation(const EmulationConfig& cfg) {
  sim::Engine eng;
  dp::DataplaneTuning tuning;
  tuning.slots_per_thread = cfg.coroutines_per_thread;
  dp::Cluster cluster(eng, cfg.nic, cfg.physical_nodes, cfg.threads_per_node,
                      cfg.virtual_machines, tuning);

  kv::TableConfig table;
  table.bucket_width = 1;
  std::uint64_t per_node = cfg.key_count / cfg.physical_nodes + 1;
  table.n_buckets = kv::buckets_for(per_node, 0.3, 1);
  kv::DistributedKv kvs(cluster, 1, table);
  for (std::uint64_t k = 1; k <= cfg.key_count; ++k)
    kvs.preload(k, value_for(k, 0, table.value_bytes));
  // "Perfect" mode: item addresses are cached up front, so lookups stay
  // on the one-sided read path.
  kvs.warm_address_caches(cfg.key_count);

  EmuState st;
  st.cluster = &cluster;
  st.kvs = &kvs;
  std::uint64_t total = std::uint64_t(cfg.physical_nodes) *
                        cfg.threads_per_node * cfg.coroutines_per_thread *
                        cfg.ops_per_coroutine;
  st.progress.warmup = static_cast<std::uint64_t>(cfg.warmup_frac * total);
  st.progress.live_coroutines = std::uint64_t(cfg.physical_nodes) *
                                cfg.threads_per_node *
                                cfg.coroutines_per_thread;

  std::uint32_t s = 0;
  for (sim::NodeId n = 0; n < cfg.physical_nodes; ++n)
    for (std::uint32_t t = 0; t < cfg.threads_per_node; ++t)
      for (std::uint32_t c = 0; c < cfg.coroutines_per_thread; ++c, ++s)
        cluster.spawn(emu_coroutine(&st, n, t, c, cfg.ops_per_coroutine,
                                    cfg.key_count,
                                    cfg.seed ^ (0xE3ull << 56) ^ s));

  eng.run();
  if (st.progress.live_coroutines != 0)
    throw std::logic_error("emulation: coroutines stalled");

  sim::SimTime window = st.progress.last_completion -
                        st.progress.measure_start;
  if (window == 0) return 0;
  return static_cast<double>(st.progress.measured) * 1000.0 /
         static_cast<double>(window) / cfg.physical_nodes;
}

}  // namespace stormsim::wl
