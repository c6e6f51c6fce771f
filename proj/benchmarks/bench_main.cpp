#include <benchmark/benchmark.h>

#include "stormsim/kv/hash_table.hpp"
#include "stormsim/nic/cache.hpp"
#include "stormsim/nic/latency.hpp"
#include "stormsim/sim/engine.hpp"
#include "stormsim/sim/rng.hpp"
#include "stormsim/verbs/verbs.hpp"

using namespace stormsim;

static void BM_EngineScheduleDispatch(benchmark::State& state) {
  for (auto _ : state) {
    sim::Engine eng;
    for (int i = 0; i < 1024; ++i) eng.schedule(i % 17, 0, "e", [] {});
    eng.run();
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_EngineScheduleDispatch);

static void BM_NicCacheAccess(benchmark::State& state) {
  nic::NicCache cache(1 << 20);
  sim::SeededRng rng(1);
  std::uint64_t n = 0;
  for (auto _ : state) {
    nic::StateKey k{nic::StateKind::MTT, rng.next_below(100000), 16};
    benchmark::DoNotOptimize(cache.access(k));
    ++n;
  }
  state.SetItemsProcessed(n);
}
BENCHMARK(BM_NicCacheAccess);

static void BM_Breakdown(benchmark::State& state) {
  nic::NicConfig cfg;
  std::vector<nic::CacheOutcome> outcomes(6, nic::CacheOutcome::Hit);
  std::uint64_t n = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nic::compute_breakdown(
        cfg, nic::OneSidedOp::Read, 64 + (n % 256) * 64, outcomes));
    ++n;
  }
  state.SetItemsProcessed(n);
}
BENCHMARK(BM_Breakdown);

static void BM_OneSidedReadPipeline(benchmark::State& state) {
  for (auto _ : state) {
    sim::Engine eng;
    nic::NicConfig cfg;
    verbs::Fabric fabric(eng, 2, cfg);
    auto dst = fabric.register_region(1, 1 << 20, nic::kPage2M, false);
    auto src = fabric.register_region(0, 1 << 20, nic::kPage2M, false);
    auto cq0 = fabric.create_cq(0);
    auto cq1 = fabric.create_cq(1);
    auto a = fabric.create_qp(0, verbs::Transport::RC, cq0);
    auto b = fabric.create_qp(1, verbs::Transport::RC, cq1);
    fabric.connect(a, b);
    for (int i = 0; i < 256; ++i)
      fabric.post_read(a, verbs::Buffer{src, 0, 64},
                       verbs::RemoteTarget{dst, std::uint64_t(i) * 64});
    eng.run();
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_OneSidedReadPipeline);

BENCHMARK_MAIN();
