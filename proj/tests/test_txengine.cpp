#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>

#include "doctest.h"
#include "stormsim/kv/hash_table.hpp"
#include "stormsim/tx/txengine.hpp"

using namespace stormsim;

namespace {

nic::NicConfig test_nic() {
  nic::NicConfig cfg;
  cfg.host_rpc_ns = 20;
  return cfg;
}

std::vector<std::uint8_t> val(std::uint64_t key, int salt) {
  std::vector<std::uint8_t> v(104);
  std::uint64_t x = kv::hash64(key + salt * 7919);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = static_cast<std::uint8_t>(x >> (i % 8));
  return v;
}

struct Rig {
  sim::Engine eng;
  std::unique_ptr<dp::Cluster> cluster;
  std::unique_ptr<kv::DistributedKv> kvs;

  explicit Rig(std::uint32_t nodes = 2, std::uint64_t keys = 64) {
    cluster = std::make_unique<dp::Cluster>(eng, test_nic(), nodes, 1);
    kv::TableConfig t;
    t.n_buckets = 256;
    kvs = std::make_unique<kv::DistributedKv>(*cluster, 1, t);
    for (std::uint64_t k = 1; k <= keys; ++k) kvs->preload(k, val(k, 0));
  }

  tx::TxExecutor executor(sim::NodeId node, std::uint32_t slot) {
    return tx::TxExecutor(cluster->dataplane(node), 0, slot, 1, 104);
  }

  /// A key owned by a node other than `node` (so tx ops go remote).
  std::uint64_t remote_key(sim::NodeId node, std::uint64_t start = 1) {
    for (std::uint64_t k = start;; ++k)
      if (kvs->physical_owner(k) != node) return k;
  }
};

struct Done {
  bool flag = false;
  tx::TxStatus status = tx::TxStatus::Aborted;
};

dp::Task<void> read_only_tx(Rig* rig, tx::TxExecutor* ex, std::uint64_t key,
                            Done* done) {
  tx::TxContext tx = ex->start_tx();
  auto* v = co_await ex->add_to_read_set(tx, key);
  if (v) co_await ex->commit(tx);
  done->status = tx.status;
  done->flag = true;
}

dp::Task<void> write_tx(Rig* rig, tx::TxExecutor* ex, std::uint64_t key,
                        std::vector<std::uint8_t> value, Done* done) {
  tx::TxContext tx = ex->start_tx();
  bool ok = co_await ex->add_to_write_set(tx, key, std::move(value));
  if (ok) co_await ex->commit(tx);
  done->status = tx.status;
  done->flag = true;
}

}  // namespace

TEST_CASE("start_tx: fresh context, unique ids, nested start rejected") {
  Rig rig;
  auto ex = rig.executor(0, 0);
  tx::TxContext t1 = ex.start_tx();
  CHECK(t1.read_set.empty());
  CHECK(t1.write_set.empty());
  CHECK(t1.status == tx::TxStatus::Active);
  CHECK_THROWS_AS(ex.start_tx(), std::logic_error);  // nested
}

TEST_CASE("sequential transactions get distinct ids") {
  Rig rig;
  auto ex = rig.executor(0, 0);
  Done d1, d2;
  std::uint64_t key = rig.remote_key(0);

  // Two sequential read-only transactions driven by one coroutine.
  struct Seq {
    static dp::Task<void> run(Rig* rig, tx::TxExecutor* ex, std::uint64_t key,
                              Done* d1, Done* d2) {
      tx::TxContext t1 = ex->start_tx();
      std::uint64_t id1 = t1.tx_id;
      auto* v = co_await ex->add_to_read_set(t1, key);
      if (v) co_await ex->commit(t1);
      d1->flag = true;
      tx::TxContext t2 = ex->start_tx();
      d2->flag = t2.tx_id != id1;
    }
  };
  rig.cluster->spawn(Seq::run(&rig, &ex, key, &d1, &d2));
  rig.eng.run();
  CHECK(d1.flag);
  CHECK(d2.flag);
}

TEST_CASE("read of a missing key aborts with NotFound") {
  Rig rig;
  auto ex = rig.executor(0, 0);
  Done done;
  std::uint64_t missing = rig.remote_key(0, 100000);
  rig.cluster->spawn(read_only_tx(&rig, &ex, missing, &done));
  rig.eng.run();
  REQUIRE(done.flag);
  CHECK(done.status == tx::TxStatus::Aborted);
  REQUIRE(ex.records().size() == 1);
  CHECK(ex.records()[0].reason == tx::AbortReason::NotFound);
}

TEST_CASE("repeated read of one key is served locally (no second op)") {
  Rig rig;
  auto ex = rig.executor(0, 0);
  std::uint64_t key = rig.remote_key(0);
  Done done;
  struct TwoReads {
    static dp::Task<void> run(Rig* rig, tx::TxExecutor* ex, std::uint64_t key,
                              Done* done) {
      tx::TxContext tx = ex->start_tx();
      auto* v1 = co_await ex->add_to_read_set(tx, key);
      std::uint32_t ops_after_first = tx.n_reads + tx.n_rpcs;
      auto* v2 = co_await ex->add_to_read_set(tx, key);
      CHECK(v1 == v2);
      CHECK(tx.n_reads + tx.n_rpcs == ops_after_first);
      co_await ex->commit(tx);
      done->status = tx.status;
      done->flag = true;
    }
  };
  rig.cluster->spawn(TwoReads::run(&rig, &ex, key, &done));
  rig.eng.run();
  REQUIRE(done.flag);
  CHECK(done.status == tx::TxStatus::Committed);
}

TEST_CASE("read-only commit: |read_set| validation reads, zero commit RPCs") {
  Rig rig;
  auto ex = rig.executor(0, 0);
  std::uint64_t k1 = rig.remote_key(0);
  std::uint64_t k2 = rig.remote_key(0, k1 + 1);
  Done done;
  struct TwoKeyRead {
    static dp::Task<void> run(Rig* rig, tx::TxExecutor* ex, std::uint64_t k1,
                              std::uint64_t k2, Done* done) {
      tx::TxContext tx = ex->start_tx();
      co_await ex->add_to_read_set(tx, k1);
      co_await ex->add_to_read_set(tx, k2);
      std::uint32_t rpcs_before_commit = tx.n_rpcs;
      co_await ex->commit(tx);
      CHECK(tx.n_validation_reads == 2);
      CHECK(tx.n_rpcs == rpcs_before_commit);  // no commit-phase RPCs
      done->status = tx.status;
      done->flag = true;
    }
  };
  rig.cluster->spawn(TwoKeyRead::run(&rig, &ex, k1, k2, &done));
  rig.eng.run();
  REQUIRE(done.flag);
  CHECK(done.status == tx::TxStatus::Committed);
}

TEST_CASE("blind single-key write commits and bumps the version by one") {
  Rig rig;
  auto ex = rig.executor(0, 0);
  std::uint64_t key = rig.remote_key(0);
  sim::NodeId owner = rig.kvs->physical_owner(key);
  std::uint64_t v0 =
      rig.kvs->table(owner).header_at(*rig.kvs->table(owner).find(key)).version;
  Done done;
  auto value = val(key, 42);
  rig.cluster->spawn(write_tx(&rig, &ex, key, value, &done));
  rig.eng.run();
  REQUIRE(done.flag);
  CHECK(done.status == tx::TxStatus::Committed);
  auto& table = rig.kvs->table(owner);
  auto found = table.find(key);
  CHECK(table.header_at(*found).version == v0 + 1);
  CHECK(table.header_at(*found).lock == 0);
  auto slot = table.slot_at(*found);
  CHECK(std::memcmp(slot.data() + kv::kSlotHeaderBytes, value.data(),
                    value.size()) == 0);
}

TEST_CASE("lock conflict: one holds, the other aborts LockBusy and releases") {
  // Three transactions on one key: t1 locks and holds, t2 arrives while
  // the lock is held and aborts LockBusy, t1 then aborts (releasing),
  // and t3 can lock and commit.
  Rig rig(3);
  std::uint64_t key = rig.remote_key(0);
  while (rig.kvs->physical_owner(key) != 2) key = rig.remote_key(0, key + 1);
  std::uint64_t filler = rig.remote_key(0);
  while (filler == key) filler = rig.remote_key(0, filler + 1);

  auto ex1 = rig.executor(0, 0);
  auto ex2 = rig.executor(1, 0);
  auto ex3 = rig.executor(0, 1);
  Done d1, d2, d3;

  struct HoldThenAbort {
    static dp::Task<void> run(Rig* rig, tx::TxExecutor* ex, std::uint64_t key,
                              std::uint64_t filler, sim::SimTime hold_ns,
                              Done* done) {
      std::uint64_t missing = rig->remote_key(0, 100000);
      tx::TxContext tx = ex->start_tx();
      bool ok = co_await ex->add_to_write_set(tx, key, val(key, 1));
      CHECK(ok);
      // Park while holding the lock: filler lookups burn simulated time.
      sim::SimTime until = rig->cluster->engine().now() + hold_ns;
      while (rig->cluster->engine().now() < until &&
             tx.status == tx::TxStatus::Active)
        co_await rig->cluster->dataplane(0).process_read_set_item(
            0, 0, 1, filler, 128);
      // Aborting by touching a missing key releases every held lock.
      if (tx.status == tx::TxStatus::Active) {
        bool ok2 = co_await ex->add_to_write_set(tx, missing, val(1, 1));
        CHECK_FALSE(ok2);
      }
      done->status = tx.status;
      done->flag = true;
    }
  };

  rig.cluster->spawn(HoldThenAbort::run(&rig, &ex1, key, filler, 40000, &d1));
  rig.eng.run_until(8000);  // t1 has acquired the lock by now
  {
    sim::NodeId owner = rig.kvs->physical_owner(key);
    CHECK(rig.kvs->table(owner).header_at(*rig.kvs->table(owner).find(key))
              .lock != 0);
  }
  rig.cluster->spawn(write_tx(&rig, &ex2, key, val(key, 2), &d2));
  rig.eng.run();
  REQUIRE(d1.flag);
  REQUIRE(d2.flag);
  CHECK(d1.status == tx::TxStatus::Aborted);
  CHECK(d2.status == tx::TxStatus::Aborted);
  REQUIRE(!ex2.records().empty());
  CHECK(ex2.records()[0].reason == tx::AbortReason::LockBusy);

  // All locks released: a third transaction can lock and commit.
  rig.cluster->spawn(write_tx(&rig, &ex3, key, val(key, 3), &d3));
  rig.eng.run();
  REQUIRE(d3.flag);
  CHECK(d3.status == tx::TxStatus::Committed);
  CHECK(rig.kvs->total_locked_slots() == 0);
}

TEST_CASE("concurrent update between read and validation aborts the reader") {
  Rig rig(3);
  std::uint64_t key = rig.remote_key(0);
  while (rig.kvs->physical_owner(key) != 2) key = rig.remote_key(0, key + 1);

  auto reader = rig.executor(0, 0);
  auto writer = rig.executor(1, 0);
  Done dr, dw;

  struct SlowReader {
    static dp::Task<void> run(Rig* rig, tx::TxExecutor* ex, std::uint64_t key,
                              Done* done) {
      tx::TxContext tx = ex->start_tx();
      auto* v = co_await ex->add_to_read_set(tx, key);
      CHECK(v != nullptr);
      // Dawdle long enough for the writer to commit.
      std::uint64_t filler = rig->remote_key(0);
      for (int i = 0; i < 12; ++i)
        co_await rig->cluster->dataplane(0).process_read_set_item(
            0, 0, 1, filler, 128);
      co_await ex->commit(tx);
      done->status = tx.status;
      done->flag = true;
    }
  };

  rig.cluster->spawn(SlowReader::run(&rig, &reader, key, &dr));
  rig.cluster->spawn(write_tx(&rig, &writer, key, val(key, 5), &dw));
  rig.eng.run();
  REQUIRE(dr.flag);
  REQUIRE(dw.flag);
  CHECK(dw.status == tx::TxStatus::Committed);
  CHECK(dr.status == tx::TxStatus::Aborted);
  CHECK(reader.records()[0].reason == tx::AbortReason::ValidationFailed);
}

TEST_CASE("tx trace csv shape") {
  std::vector<tx::TxRecord> recs(1);
  recs[0].tx_id = 42;
  recs[0].status = tx::TxStatus::Committed;
  recs[0].n_reads = 2;
  recs[0].n_rpcs = 3;
  recs[0].n_validation_reads = 2;
  recs[0].latency_ns = 12345;
  std::string csv = tx::tx_trace_csv(recs);
  CHECK(csv.find("tx_id,status,reason,n_reads,n_rpcs,n_validation_reads,"
                 "latency_ns") == 0);
  CHECK(csv.find("42,committed,none,2,3,2,12345") != std::string::npos);
}
