// Acceptance suite: runs every acceptance criterion end to end and
// prints one PASS/FAIL line each. Exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "stormsim/harness/config.hpp"
#include "stormsim/harness/experiment.hpp"
#include "stormsim/harness/fit.hpp"
#include "stormsim/kv/hash_table.hpp"
#include "stormsim/tx/txengine.hpp"
#include "stormsim/wl/runners.hpp"

using namespace stormsim;

namespace {

const std::string kData = STORMSIM_DATA_DIR;
int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str());
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

nic::NicConfig preset(const std::string& name) {
  return nic::load_preset(kData + "/presets/" + name + ".preset");
}

std::vector<std::uint8_t> value_for(std::uint64_t key, std::uint64_t salt) {
  std::vector<std::uint8_t> v(104);
  std::uint64_t x = kv::hash64(key ^ salt);
  for (std::size_t i = 0; i < v.size(); ++i) {
    x = kv::hash64(x + i);
    v[i] = static_cast<std::uint8_t>(x);
  }
  return v;
}

// --------------------------------------------------------------------
// Criterion 1: event machinery equals the closed-form four-bucket
// breakdown to within 1 ns for random (op, payload, preset) triples.
// --------------------------------------------------------------------
void criterion_1() {
  auto t0 = std::chrono::steady_clock::now();
  const char* names[] = {"cx3", "cx4ib", "cx4roce", "cx5"};
  sim::SeededRng rng(20260809);
  std::uint64_t max_err = 0;
  int checked = 0;

  for (int i = 0; i < 50; ++i) {
    nic::NicConfig cfg = preset(names[rng.next_below(4)]);
    auto op = static_cast<nic::OneSidedOp>(rng.next_below(3));
    std::uint32_t payload =
        static_cast<std::uint32_t>(rng.next_range(1, 256)) * 64;

    sim::Engine eng;
    verbs::Fabric fabric(eng, 2, cfg);
    auto local = fabric.register_region(0, 1 << 20, nic::kPage2M, false);
    auto remote = fabric.register_region(1, 1 << 20, nic::kPage2M, false);
    auto cq0 = fabric.create_cq(0);
    auto cq1 = fabric.create_cq(1);
    auto a = fabric.create_qp(0, verbs::Transport::RC, cq0);
    auto b = fabric.create_qp(1, verbs::Transport::RC, cq1);
    fabric.connect(a, b);
    if (op == nic::OneSidedOp::WriteImm) {
      fabric.post_recv(b, verbs::Buffer{});
      fabric.post_recv(b, verbs::Buffer{});
    }

    // Cold pass: six misses; warm pass: six hits.
    for (int pass = 0; pass < 2; ++pass) {
      sim::SimTime post_at = eng.now();
      verbs::Buffer lb{local, 0, payload};
      verbs::RemoteTarget rt{remote, 0};
      switch (op) {
        case nic::OneSidedOp::Read: fabric.post_read(a, lb, rt); break;
        case nic::OneSidedOp::Write: fabric.post_write(a, lb, rt); break;
        case nic::OneSidedOp::WriteImm:
          fabric.post_write_imm(a, lb, rt, 1);
          break;
      }
      eng.run();
      auto cs = fabric.poll_cq(cq0, 8);
      if (cs.size() != 1 || cs[0].status != verbs::CompletionStatus::OK) {
        report(1, false, "operation did not complete cleanly");
        return;
      }
      std::vector<nic::CacheOutcome> outcomes(
          6, pass == 0 ? nic::CacheOutcome::Miss : nic::CacheOutcome::Hit);
      nic::LatencyBreakdown expect =
          nic::compute_breakdown(cfg, op, payload, outcomes);
      std::uint64_t simulated = cs[0].timestamp - post_at;
      std::uint64_t err = simulated > expect.total()
                              ? simulated - expect.total()
                              : expect.total() - simulated;
      max_err = std::max(max_err, err);
      ++checked;
      fabric.poll_cq(cq1, 8);
    }
  }
  double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "closed-form oracle equivalence: %d checks, max error %llu ns "
                "(<=1), %.2fs (<10s)",
                checked, (unsigned long long)max_err, secs);
  report(1, max_err <= 1 && secs < 10.0, buf);
}

// --------------------------------------------------------------------
// Criterion 2: calibration quality on the shipped anchor sets.
// --------------------------------------------------------------------
void criterion_2() {
  double worst = 0;
  std::string detail;
  for (const char* name : {"cx4ib", "cx4roce"}) {
    auto anchors =
        harness::load_anchor_csv(kData + "/anchors/" + name + ".csv");
    auto fit = harness::fit_preset(anchors, preset(name));
    for (const auto& r : fit.residuals) {
      std::printf("    %s %s @%lluB: target %.0f, model %.0f, residual "
                  "%.2f%%\n",
                  name, r.anchor.op == harness::AnchorOp::RR ? "rr" : "rpc",
                  (unsigned long long)r.anchor.payload_bytes, r.anchor.target_ns,
                  r.model_ns, r.relative * 100);
    }
    worst = std::max(worst, fit.max_relative);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf,
                "calibration residuals: max %.2f%% (<=6%%)", worst * 100);
  report(2, worst <= 0.06, buf);
}

// --------------------------------------------------------------------
// Criterion 3: PCIe dominance for single-cacheline mirroring; the share
// strictly decreases toward 256 cachelines.
// --------------------------------------------------------------------
void criterion_3() {
  auto cfg = preset("cx4ib");
  wl::WorkloadSpec spec;
  spec.op_count = 2000;
  spec.sizes = wl::MessageSizeDistribution::single(1);
  double share1 = wl::run_sync_mirroring(cfg, spec).pcie_share;

  bool decreasing = true;
  double prev = share1;
  for (std::uint32_t cl = 2; cl <= 256; cl *= 2) {
    spec.sizes = wl::MessageSizeDistribution::single(cl);
    spec.op_count = 500;
    double s = wl::run_sync_mirroring(cfg, spec).pcie_share;
    if (s >= prev) decreasing = false;
    prev = s;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "PCIe share at 1 cacheline %.3f (in [0.55,0.75]); share at "
                "256 cachelines %.3f, strictly decreasing: %s",
                share1, prev, decreasing ? "yes" : "no");
  report(3, share1 >= 0.55 && share1 <= 0.75 && decreasing, buf);
}

// --------------------------------------------------------------------
// Criterion 4: connection-scaling drops ordered CX3 > CX4 > CX5 inside
// their bands; CX5 plateaus beyond cache exhaustion.
// --------------------------------------------------------------------
void criterion_4() {
  auto drop = [](const nic::NicConfig& cfg) {
    return wl::connection_scaling_drop(cfg, 8, 64);
  };
  double d3 = drop(preset("cx3"));
  double d4 = drop(preset("cx4roce"));
  double d5 = drop(preset("cx5"));

  auto cx5 = preset("cx5");
  auto tput = [&](std::uint32_t n) {
    wl::RandomReadsConfig rr;
    rr.nic = cx5;
    rr.connections = n;
    return wl::run_random_reads(rr);
  };
  // QP state alone exceeds the CX5 cache around cap/375 connections;
  // the plateau is asserted from the next power of two upward.
  double t1k = tput(1024), t2k = tput(2048), t4k = tput(4096);
  double h1 = std::abs(t2k / t1k - 1.0), h2 = std::abs(t4k / t2k - 1.0);

  bool bands = d3 >= 0.70 && d3 <= 0.90 && d4 >= 0.32 && d4 <= 0.52 &&
               d5 >= 0.22 && d5 <= 0.42;
  bool ordered = d3 > d4 && d4 > d5;
  bool plateau = h1 < 0.05 && h2 < 0.05;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "8->64 drops cx3 %.3f [0.70,0.90], cx4 %.3f [0.32,0.52], cx5 "
                "%.3f [0.22,0.42], ordered %s; cx5 plateau deltas %.2f%%/%.2f%% "
                "(<5%%)",
                d3, d4, d5, ordered ? "yes" : "no", h1 * 100, h2 * 100);
  report(4, bands && ordered && plateau, buf);
}

// --------------------------------------------------------------------
// Criterion 5: one-two-sided benefit over RPC-only.
// --------------------------------------------------------------------
void criterion_5() {
  auto run = [&](bool rpc_only, bool tatp) {
    wl::KvRunConfig k;
    k.nic = preset("cx4ib");
    k.spec.kind =
        tatp ? wl::WorkloadKind::TatpLite : wl::WorkloadKind::KvLookups;
    k.spec.n_nodes = 8;
    k.spec.threads_per_node = 2;
    k.spec.coroutines_per_thread = tatp ? 8 : 16;
    k.spec.key_count = tatp ? 4096 : 2048;
    k.spec.op_count = tatp ? 160000 : 80000;
    k.spec.seed = 11;
    if (!tatp) k.spec.mix = wl::OpMix{1.0, 0, 0, 0};
    k.table.bucket_width = 1;
    k.occupancy_target = 0.6;
    k.rpc_only = rpc_only;
    k.warmup_frac = 0.3;
    return tatp ? wl::run_tatp(k) : wl::run_kv_lookups(k);
  };
  double kv_ratio = run(false, false).throughput_ops_per_us_per_machine /
                    run(true, false).throughput_ops_per_us_per_machine;
  double tatp_ratio = run(false, true).throughput_ops_per_us_per_machine /
                      run(true, true).throughput_ops_per_us_per_machine;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "hybrid vs rpc-only throughput: lookups %.2fx (>=1.3), "
                "tatp-lite %.2fx (>=1.15)",
                kv_ratio, tatp_ratio);
  report(5, kv_ratio >= 1.3 && tatp_ratio >= 1.15, buf);
}

// --------------------------------------------------------------------
// Criterion 6: serializability oracle over randomized TATP-lite runs.
// --------------------------------------------------------------------
struct ReplayEntry {
  std::uint64_t version = 0;
  std::vector<std::uint8_t> value;
  bool present = false;
};

bool check_serializable(std::uint64_t seed, std::string& why) {
  wl::KvRunConfig k;
  k.nic = preset("cx4ib");
  k.spec.kind = wl::WorkloadKind::TatpLite;
  k.spec.n_nodes = 4;
  k.spec.threads_per_node = 1;
  k.spec.coroutines_per_thread = 2;  // 8 concurrent transactions
  k.spec.key_count = 64;
  k.spec.op_count = 1000;
  k.spec.seed = seed;
  k.table.bucket_width = 1;
  k.occupancy_target = 0.6;
  k.warmup_frac = 0.0;
  wl::RunMetrics m = wl::run_tatp_with_tables(k);

  // (The table handles were stashed by run_tatp_with_tables; see below.)
  return wl::verify_serializability(m, why);
}

void criterion_6() {
  auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string why;
  for (std::uint64_t seed = 1; seed <= 20 && ok; ++seed) {
    if (!check_serializable(seed, why)) {
      ok = false;
      why = "seed " + std::to_string(seed) + ": " + why;
    }
  }
  double secs = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "serializability oracle over 20 seeds x 1000 txs: %s, %.1fs "
                "(<60s)",
                ok ? "acyclic + replay matches + no leaked locks" : why.c_str(),
                secs);
  report(6, ok && secs < 60.0, buf);
}

// --------------------------------------------------------------------
// Criterion 7: Algorithm-1 accounting under adversarial staleness.
// --------------------------------------------------------------------
void criterion_7() {
  bool ok = wl::adversarial_staleness_check();
  report(7, ok,
         "path accounting identities exact and all values correct under "
         "adversarial address staleness");
}

// --------------------------------------------------------------------
// Criterion 8: allocator / MPT bound and physical segments.
// --------------------------------------------------------------------
void criterion_8() {
  sim::Engine eng;
  verbs::Fabric fabric(eng, 2, preset("cx4ib"));

  kv::ContiguousAllocator alloc(fabric, 0);
  for (int i = 0; i < 10000; ++i) alloc.alloc(1024);
  std::size_t contiguous_regions = alloc.region_count();
  std::uint64_t contiguous_mpt = fabric.nic(0).mpt_entries();

  // Naive scheme: every allocation registered as its own region.
  sim::Engine eng2;
  verbs::Fabric fabric2(eng2, 1, preset("cx4ib"));
  for (int i = 0; i < 10000; ++i)
    fabric2.register_region(0, 1024, nic::kPage4K, false);
  std::uint64_t naive_mpt = fabric2.nic(0).mpt_entries();

  auto seg = fabric.register_region(1, 64ull << 30, nic::kPage2M, true);
  const auto& meta = fabric.region_meta(seg);

  bool ok = contiguous_regions == 1 && naive_mpt >= 1000 * contiguous_mpt &&
            meta.mtt_entry_count == 1 && meta.mpt_entry_count == 1;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "10k allocations -> %zu region (=1); naive/contiguous MPT "
                "%llu/%llu (>=1000x); 64GiB physical segment -> (%llu MTT, "
                "%llu MPT)",
                contiguous_regions, (unsigned long long)naive_mpt,
                (unsigned long long)contiguous_mpt,
                (unsigned long long)meta.mtt_entry_count,
                (unsigned long long)meta.mpt_entry_count);
  report(8, ok, buf);
}

// --------------------------------------------------------------------
// Criterion 9: byte-identical CSV and event logs for equal seeds,
// checked through the real CLI.
// --------------------------------------------------------------------
void criterion_9() {
  std::string cfg_path = "/tmp/stormsim_acc9.ini";
  {
    std::ofstream out(cfg_path);
    out << "[experiment]\nkind = tatp\nseed = 99\n"
        << "[preset]\nfile = " << kData << "/presets/cx4ib.preset\n"
        << "[topology]\nnodes = 4\nthreads_per_node = 1\n"
        << "coroutines_per_thread = 4\n"
        << "[table]\nkey_count = 512\n"
        << "[workload]\nop_count = 4000\n";
  }
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  auto run_once = [&](const std::string& tag) {
    std::string cmd = std::string("STORMSIM_LOG=/tmp/stormsim_acc9_log") + tag +
                      " " + STORMSIM_BIN + " run --config " + cfg_path +
                      " --out /tmp/stormsim_acc9_csv" + tag + " 2>/dev/null";
    return std::system(cmd.c_str()) == 0;
  };
  bool ran = run_once("a") && run_once("b");
  std::string csv_a = slurp("/tmp/stormsim_acc9_csva");
  std::string csv_b = slurp("/tmp/stormsim_acc9_csvb");
  std::string log_a = slurp("/tmp/stormsim_acc9_loga");
  std::string log_b = slurp("/tmp/stormsim_acc9_logb");
  bool ok = ran && !csv_a.empty() && csv_a == csv_b && !log_a.empty() &&
            log_a == log_b;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "identical seeds -> identical outputs: CSV %zu bytes %s, "
                "event log %zu lines %s",
                csv_a.size(), csv_a == csv_b ? "equal" : "DIFFER",
                static_cast<std::size_t>(
                    std::count(log_a.begin(), log_a.end(), '\n')),
                log_a == log_b ? "equal" : "DIFFER");
  report(9, ok, buf);
}

// --------------------------------------------------------------------
// Criterion 10: emulation trends.
// --------------------------------------------------------------------
void criterion_10() {
  auto cfg = preset("cx4ib");
  auto run = [&](std::uint32_t threads, std::uint32_t machines) {
    wl::EmulationConfig em;
    em.nic = cfg;
    em.threads_per_node = threads;
    em.virtual_machines = machines;
    return wl::run_emulation(em);
  };
  double d20 = run(20, 32) / run(20, 96);
  double d10 = run(10, 32) / run(10, 128);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "per-machine throughput drop 32->96 at 20 threads: %.2fx (in "
                "[1.3,1.9]); 32->128 at 10 threads: %.2fx (<=1.1)",
                d20, d10);
  report(10, d20 >= 1.3 && d20 <= 1.9 && d10 <= 1.1, buf);
}

}  // namespace

int main() {
  std::printf("stormsim acceptance suite\n");
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  std::printf("%d/10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
