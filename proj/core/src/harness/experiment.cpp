#include "stormsim/harness/experiment.hpp"

#include <sstream>
#include <stdexcept>

#include "stormsim/wl/runners.hpp"

namespace stormsim::harness {

namespace {

wl::WorkloadSpec spec_from(const ExperimentConfig& cfg) {
  wl::WorkloadSpec spec;
  spec.n_nodes = cfg.nodes;
  spec.threads_per_node = cfg.threads_per_node;
  spec.coroutines_per_thread = cfg.coroutines_per_thread;
  spec.key_count = cfg.key_count;
  spec.key_distribution = cfg.distribution;
  spec.zipf_theta = cfg.zipf_theta;
  spec.op_count = cfg.op_count;
  spec.seed = cfg.seed;
  spec.sizes = cfg.message_cachelines == 0
                   ? wl::MessageSizeDistribution::small_message_default()
                   : wl::MessageSizeDistribution::single(cfg.message_cachelines);
  return spec;
}

wl::KvRunConfig kv_config(const ExperimentConfig& cfg) {
  wl::KvRunConfig k;
  k.nic = cfg.nic;
  k.spec = spec_from(cfg);
  k.spec.kind = cfg.kind == ExperimentKind::Tatp ? wl::WorkloadKind::TatpLite
                                                 : wl::WorkloadKind::KvLookups;
  if (cfg.kind == ExperimentKind::KvLookups) {
    k.spec.mix = wl::OpMix{1.0, 0.0, 0.0, 0.0};
  } else {
    k.spec.mix = cfg.mix;
  }
  k.table.bucket_width = cfg.bucket_width;
  k.table.value_bytes = cfg.value_bytes;
  k.table.farm_mode = cfg.farm_mode;
  k.occupancy_target = cfg.occupancy_target;
  k.rpc_only = cfg.rpc_only;
  k.virtual_machines = cfg.virtual_machines;
  k.warmup_frac = cfg.warmup_frac;
  return k;
}

}  // namespace

RunOutput run_experiment(const ExperimentConfig& cfg, bool capture_event_log) {
  RunOutput out;
  switch (cfg.kind) {
    case ExperimentKind::KvLookups:
    case ExperimentKind::Tatp: {
      wl::KvRunConfig k = kv_config(cfg);
      k.capture_event_log = capture_event_log;
      wl::RunMetrics m = cfg.kind == ExperimentKind::Tatp
                             ? wl::run_tatp(k)
                             : wl::run_kv_lookups(k);
      out.rows.push_back(row_from_metrics(to_string(cfg.kind), m));
      out.event_log = std::move(m.event_log);
      break;
    }
    case ExperimentKind::SyncMirroring: {
      wl::WorkloadSpec spec = spec_from(cfg);
      spec.kind = wl::WorkloadKind::SyncMirroring;
      wl::MirroringResult r = wl::run_sync_mirroring(cfg.nic, spec);
      ResultRow row = row_from_metrics(to_string(cfg.kind), r.metrics);
      out.rows.push_back(std::move(row));
      break;
    }
    case ExperimentKind::RandomReads: {
      wl::RandomReadsConfig rr;
      rr.nic = cfg.nic;
      rr.connections = cfg.connections;
      rr.data_bytes = cfg.data_bytes;
      rr.seed = cfg.seed;
      double tput = wl::run_random_reads(rr);
      ResultRow row;
      row.experiment = to_string(cfg.kind);
      row.node_count = 2;
      row.connections = cfg.connections;
      row.ops = rr.measure_ops;
      row.throughput_ops_per_us_per_machine = tput;
      out.rows.push_back(std::move(row));
      break;
    }
    case ExperimentKind::Emulation: {
      wl::EmulationConfig em;
      em.nic = cfg.nic;
      em.physical_nodes = cfg.nodes;
      em.threads_per_node = cfg.threads_per_node;
      em.virtual_machines =
          cfg.virtual_machines ? cfg.virtual_machines : cfg.nodes;
      em.coroutines_per_thread = cfg.coroutines_per_thread;
      em.key_count = cfg.key_count;
      em.seed = cfg.seed;
      double tput = wl::run_emulation(em);
      ResultRow row;
      row.experiment = to_string(cfg.kind);
      row.node_count = em.virtual_machines;
      row.connections =
          verbs::sibling_connection_count(em.virtual_machines,
                                          em.threads_per_node);
      row.throughput_ops_per_us_per_machine = tput;
      out.rows.push_back(std::move(row));
      break;
    }
  }

  for (const ResultRow& r : out.rows) {
    if (r.pcie_const_sum_ns + r.pcie_var_sum_ns + r.net_const_sum_ns +
            r.net_var_sum_ns !=
        r.breakdown_total_sum_ns)
      throw std::logic_error("invariant violation: buckets do not sum");
  }
  return out;
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "msg_size") return SweepAxis::MsgSize;
  if (name == "connections") return SweepAxis::Connections;
  if (name == "nodes") return SweepAxis::Nodes;
  throw std::invalid_argument("unknown sweep axis: " + name);
}

RunOutput run_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                    const std::vector<std::uint64_t>& values) {
  if (values.empty()) throw std::invalid_argument("sweep: no axis values");
  RunOutput all;
  for (std::uint64_t v : values) {
    ExperimentConfig c = cfg;
    switch (axis) {
      case SweepAxis::MsgSize:
        c.message_cachelines = static_cast<std::uint32_t>(v);
        break;
      case SweepAxis::Connections:
        c.connections = static_cast<std::uint32_t>(v);
        break;
      case SweepAxis::Nodes:
        if (c.kind == ExperimentKind::Emulation)
          c.virtual_machines = static_cast<std::uint32_t>(v);
        else
          c.nodes = static_cast<std::uint32_t>(v);
        break;
    }
    RunOutput one = run_experiment(c);
    for (auto& row : one.rows) {
      row.experiment += "@" + std::to_string(v);
      all.rows.push_back(std::move(row));
    }
  }
  return all;
}

}  // namespace stormsim::harness
