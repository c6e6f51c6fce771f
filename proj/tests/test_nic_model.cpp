#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "stormsim/nic/cache.hpp"
#include "stormsim/nic/config.hpp"
#include "stormsim/nic/latency.hpp"
#include "stormsim/nic/nic.hpp"
#include "stormsim/sim/rng.hpp"

using namespace stormsim;
using nic::CacheOutcome;

namespace {
nic::NicConfig test_config() {
  nic::NicConfig cfg;
  cfg.cache_capacity_bytes = 2ull << 20;
  cfg.num_pus = 8;
  cfg.pu_service_ns = 30;
  cfg.cache_hit_ns = 2;
  cfg.cache_miss_ns = 800;
  cfg.pcie_write_ns = 295;
  cfg.pcie_dma_rt_ns = 380;
  cfg.pcie_per_byte_ns = 0.045;
  cfg.wire_prop_ns = 345;
  cfg.wire_per_byte_ns = 0.08;
  cfg.miss_overlap_factor = 0.5;
  return cfg;
}
}  // namespace

TEST_CASE("region registration: 20 GiB with 2 MiB pages") {
  nic::Nic n(test_config());
  auto meta = n.register_region(1, 0, 20ull << 30, nic::kPage2M, false);
  CHECK(meta.mtt_entry_count == 10240);
  CHECK(meta.mpt_entry_count == 1);
}

TEST_CASE("region registration: physical segment is one MTT + one MPT") {
  nic::Nic n(test_config());
  auto meta = n.register_region(1, 0, 20ull << 30, nic::kPage2M, true);
  CHECK(meta.mtt_entry_count == 1);
  CHECK(meta.mpt_entry_count == 1);
}

TEST_CASE("region registration: 64 MiB with 4 KiB pages") {
  nic::Nic n(test_config());
  auto meta = n.register_region(1, 0, 64ull << 20, nic::kPage4K, false);
  CHECK(meta.mtt_entry_count == 16384);
  CHECK(meta.mpt_entry_count == 1);
}

TEST_CASE("region registration rejects unaligned base and bad page size") {
  nic::Nic n(test_config());
  CHECK_THROWS_AS(n.register_region(1, 4096, 1 << 20, nic::kPage2M, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(n.register_region(1, 0, 1 << 20, 12345, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(n.register_region(1, 0, 0, nic::kPage2M, false),
                  std::invalid_argument);
}

TEST_CASE("cache: cold access misses, repeat hits") {
  nic::NicCache cache(1 << 20);
  nic::StateKey k{nic::StateKind::QP, 1, 375};
  CHECK(cache.access(k) == CacheOutcome::Miss);
  CHECK(cache.access(k) == CacheOutcome::Hit);
  CHECK(cache.hits() == 1);
  CHECK(cache.misses() == 1);
}

// Hand-simulated LRU oracle: capacity two equal entries, access A,B,C,A:
// A miss, B miss, C miss (evicts A), A miss (evicts B) -> 4 misses.
TEST_CASE("cache: LRU eviction, A B C A with capacity for two") {
  nic::NicCache cache(2 * 375);
  nic::StateKey a{nic::StateKind::QP, 1, 375};
  nic::StateKey b{nic::StateKind::QP, 2, 375};
  nic::StateKey c{nic::StateKind::QP, 3, 375};
  CHECK(cache.access(a) == CacheOutcome::Miss);
  CHECK(cache.access(b) == CacheOutcome::Miss);
  CHECK(cache.access(c) == CacheOutcome::Miss);
  CHECK(cache.access(a) == CacheOutcome::Miss);
  CHECK(cache.misses() == 4);
  CHECK(cache.occupancy_bytes() == 2 * 375);
}

TEST_CASE("cache: entry larger than capacity is rejected") {
  nic::NicCache cache(100);
  CHECK_THROWS_AS(cache.access(nic::StateKey{nic::StateKind::QP, 1, 375}),
                  std::invalid_argument);
}

TEST_CASE("cache: occupancy never exceeds capacity under random load") {
  nic::NicCache cache(4096);
  sim::SeededRng rng(5);
  for (int i = 0; i < 20000; ++i) {
    nic::StateKey k{nic::StateKind::MTT, rng.next_below(4096), 16};
    cache.access(k);
    REQUIRE(cache.occupancy_bytes() <= 4096);
  }
}

TEST_CASE("breakdown: buckets partition the total exactly") {
  nic::NicConfig cfg = test_config();
  sim::SeededRng rng(9);
  for (int i = 0; i < 200; ++i) {
    std::vector<CacheOutcome> outcomes;
    for (int j = 0; j < 6; ++j)
      outcomes.push_back(rng.next_below(2) ? CacheOutcome::Hit
                                           : CacheOutcome::Miss);
    std::uint64_t payload = 64 * rng.next_range(1, 256);
    auto op = static_cast<nic::OneSidedOp>(rng.next_below(3));
    nic::LatencyBreakdown b = nic::compute_breakdown(cfg, op, payload, outcomes);
    CHECK(b.total() == b.pcie_const + b.pcie_var + b.net_const + b.net_var);
    CHECK(b.total() > 0);
  }
}

TEST_CASE("breakdown: variable terms vanish at zero payload") {
  nic::NicConfig cfg = test_config();
  nic::LatencyBreakdown b = nic::all_hit_breakdown(cfg, nic::OneSidedOp::Read, 0);
  CHECK(b.pcie_var == 0);
  CHECK(b.net_var == 0);
  CHECK(b.total() == b.pcie_const + b.net_const);
}

// Closed-form oracle for the payload scaling: the 256-vs-1 cacheline
// difference is pure per-byte cost.
TEST_CASE("breakdown: 256 vs 1 cacheline difference matches per-byte rates") {
  nic::NicConfig cfg = test_config();
  auto b1 = nic::all_hit_breakdown(cfg, nic::OneSidedOp::Read, 64);
  auto b256 = nic::all_hit_breakdown(cfg, nic::OneSidedOp::Read, 256 * 64);
  std::uint64_t diff = b256.total() - b1.total();
  double expect = 255.0 * 64.0 * (2 * cfg.pcie_per_byte_ns +
                                  cfg.wire_per_byte_ns);
  CHECK(std::abs(static_cast<double>(diff) - expect) <= 2.0);
}

TEST_CASE("breakdown: total is monotone in payload") {
  nic::NicConfig cfg = test_config();
  std::uint64_t prev = 0;
  for (std::uint64_t cl = 1; cl <= 256; cl *= 2) {
    auto b = nic::all_hit_breakdown(cfg, nic::OneSidedOp::Write, cl * 64);
    CHECK(b.total() >= prev);
    prev = b.total();
  }
}

TEST_CASE("breakdown: all-hit is a lower bound over outcome vectors") {
  nic::NicConfig cfg = test_config();
  sim::SeededRng rng(21);
  std::uint64_t base = nic::all_hit_breakdown(cfg, nic::OneSidedOp::Read, 64)
                           .total();
  for (int i = 0; i < 100; ++i) {
    std::vector<CacheOutcome> outcomes;
    for (int j = 0; j < 6; ++j)
      outcomes.push_back(rng.next_below(2) ? CacheOutcome::Hit
                                           : CacheOutcome::Miss);
    CHECK(nic::compute_breakdown(cfg, nic::OneSidedOp::Read, 64, outcomes)
              .total() >= base);
  }
}

TEST_CASE("pages_touched charges straddling accesses") {
  CHECK(nic::pages_touched(0, 64, nic::kPage2M) == 1);
  CHECK(nic::pages_touched((2ull << 20) - 32, 64, nic::kPage2M) == 2);
  CHECK(nic::pages_touched(0, 2ull << 20, nic::kPage2M) == 1);
  CHECK(nic::pages_touched(1, 2ull << 20, nic::kPage2M) == 2);
}

TEST_CASE("pu_admit: FIFO per PU and idle start") {
  nic::NicConfig cfg = test_config();
  nic::Nic n(cfg);
  // Same QP: second WQE starts after the first's occupancy.
  sim::SimTime e1 = n.pu_admit(0, 100, 50);
  CHECK(e1 == 150);
  sim::SimTime e2 = n.pu_admit(0, 100, 50);
  CHECK(e2 == 200);
  // Different PU: independent timeline.
  sim::SimTime e3 = n.pu_admit(1, 100, 50);
  CHECK(e3 == 150);
}

TEST_CASE("state accounting identity") {
  nic::NicConfig cfg = test_config();
  nic::Nic n(cfg);
  n.register_region(1, 0, 20ull << 30, nic::kPage2M, false);
  n.register_region(2, 0, 1ull << 30, nic::kPage2M, true);
  for (int i = 0; i < 5; ++i) n.add_qp(i);
  n.add_recv_wqe(1);
  n.add_recv_wqe(2);
  std::uint64_t expected = 375ull * 5 + (10240 + 1) * cfg.mtt_entry_bytes +
                           2 * cfg.mpt_entry_bytes + 2 * cfg.recv_wqe_bytes;
  CHECK(n.trackable_bytes() == expected);
  n.consume_recv_wqe(1);
  CHECK(n.trackable_bytes() == expected - cfg.recv_wqe_bytes);
  CHECK_NOTHROW(n.verify_accounting());
}

TEST_CASE("preset round trip and unknown key rejection") {
  nic::NicConfig cfg = test_config();
  std::string text = nic::preset_to_string(cfg);
  nic::NicConfig back = nic::parse_preset(text, "<string>");
  CHECK(back.cache_capacity_bytes == cfg.cache_capacity_bytes);
  CHECK(back.pu_service_ns == cfg.pu_service_ns);
  CHECK(back.pcie_per_byte_ns == doctest::Approx(cfg.pcie_per_byte_ns));
  CHECK(back.miss_overlap_factor == doctest::Approx(cfg.miss_overlap_factor));

  CHECK_THROWS_WITH_AS(nic::parse_preset("bogus_key = 1\n", "p"),
                       doctest::Contains("unknown preset key"),
                       std::invalid_argument);
  CHECK_THROWS_AS(nic::parse_preset("cache_capacity_bytes\n", "p"),
                  std::invalid_argument);
}

TEST_CASE("config validation ranges") {
  nic::NicConfig cfg = test_config();
  cfg.miss_overlap_factor = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = test_config();
  cfg.cache_miss_ns = cfg.cache_hit_ns;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = test_config();
  cfg.miss_overlap_factor = 1.0;
  CHECK_NOTHROW(cfg.validate());
}
