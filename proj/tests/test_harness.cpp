#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "stormsim/harness/config.hpp"
#include "stormsim/harness/experiment.hpp"
#include "stormsim/harness/fit.hpp"
#include "stormsim/harness/report.hpp"

using namespace stormsim;

namespace {

const std::string kData = STORMSIM_DATA_DIR;

std::string minimal_config(const std::string& extra = "") {
  return "[experiment]\nkind = kv_lookups\nseed = 7\n"
         "[preset]\nfile = " + kData + "/presets/cx4ib.preset\n"
         "[topology]\nnodes = 2\nthreads_per_node = 1\n"
         "coroutines_per_thread = 4\n"
         "[table]\nkey_count = 256\n"
         "[workload]\nop_count = 1500\n" + extra;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(STORMSIM_BIN) + " " + args + " 2>/dev/null";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("config: parse, defaults, schema errors with line numbers") {
  auto cfg = harness::parse_config(minimal_config(), "<string>");
  CHECK(cfg.kind == harness::ExperimentKind::KvLookups);
  CHECK(cfg.seed == 7);
  CHECK(cfg.nodes == 2);
  CHECK(cfg.key_count == 256);
  CHECK(cfg.nic.num_pus == 8);

  CHECK_THROWS_WITH_AS(
      harness::parse_config("[experiment]\nbogus = 1\n", "cfg"),
      doctest::Contains("cfg:2"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(harness::parse_config("[nonsense]\n", "cfg"),
                       doctest::Contains("unknown section"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(harness::parse_config("kind = x\n", "cfg"),
                       doctest::Contains("outside any section"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(harness::parse_config("[experiment]\nkind = kv_lookups\n", "cfg"),
                       doctest::Contains("missing [preset]"),
                       std::invalid_argument);
}

TEST_CASE("run_experiment: one row, bucket identity enforced") {
  auto cfg = harness::parse_config(minimal_config(), "<string>");
  auto out = harness::run_experiment(cfg);
  REQUIRE(out.rows.size() == 1);
  const auto& r = out.rows[0];
  CHECK(r.ops > 0);
  CHECK(r.pcie_const_sum_ns + r.pcie_var_sum_ns + r.net_const_sum_ns +
            r.net_var_sum_ns ==
        r.breakdown_total_sum_ns);
}

TEST_CASE("same config and seed give byte-identical CSV") {
  auto cfg = harness::parse_config(minimal_config(), "<string>");
  auto a = harness::run_experiment(cfg, true);
  auto b = harness::run_experiment(cfg, true);
  CHECK(harness::results_csv(a.rows) == harness::results_csv(b.rows));
  CHECK(a.event_log == b.event_log);
  CHECK(!a.event_log.empty());
  cfg.seed = 8;
  auto c = harness::run_experiment(cfg, true);
  CHECK(a.event_log != c.event_log);
}

TEST_CASE("results CSV round trip") {
  auto cfg = harness::parse_config(minimal_config(), "<string>");
  auto out = harness::run_experiment(cfg);
  std::string csv = harness::results_csv(out.rows);
  auto rows = harness::parse_results_csv(csv);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].experiment == out.rows[0].experiment);
  CHECK(rows[0].ops == out.rows[0].ops);
  CHECK(rows[0].breakdown_total_sum_ns == out.rows[0].breakdown_total_sum_ns);
}

TEST_CASE("sweep: message size axis yields monotone latency") {
  std::string text =
      "[experiment]\nkind = sync_mirroring\nseed = 3\n"
      "[preset]\nfile = " + kData + "/presets/cx4ib.preset\n"
      "[workload]\nop_count = 200\n";
  auto cfg = harness::parse_config(text, "<string>");
  auto out = harness::run_sweep(cfg, harness::SweepAxis::MsgSize,
                                {1, 4, 16, 64, 256});
  REQUIRE(out.rows.size() == 5);
  double prev = 0;
  for (const auto& r : out.rows) {
    double mean = static_cast<double>(r.breakdown_total_sum_ns) /
                  static_cast<double>(r.breakdown_ops);
    CHECK(mean >= prev);
    prev = mean;
  }
  CHECK_THROWS_AS(harness::run_sweep(cfg, harness::SweepAxis::MsgSize, {}),
                  std::invalid_argument);
}

TEST_CASE("fit: shipped anchors within tolerance; degenerate set refused") {
  auto tmpl = nic::load_preset(kData + "/presets/cx4ib.preset");
  auto anchors = harness::load_anchor_csv(kData + "/anchors/cx4ib.csv");
  REQUIRE(anchors.size() == 2);
  auto fit = harness::fit_preset(anchors, tmpl);
  CHECK(fit.max_relative <= 0.06);

  std::vector<harness::FitAnchor> one = {anchors[0]};
  CHECK_THROWS_WITH_AS(harness::fit_preset(one, tmpl),
                       doctest::Contains("underdetermined"),
                       std::invalid_argument);
}

TEST_CASE("report renders shares and validates the bucket identity") {
  auto cfg = harness::parse_config(minimal_config(), "<string>");
  auto out = harness::run_experiment(cfg);
  std::string csv = harness::results_csv(out.rows);
  std::string rep = harness::render_report(csv);
  CHECK(rep.find("PCIe share:") != std::string::npos);
  CHECK(rep.find("kv_lookups") != std::string::npos);

  // Corrupt one bucket: the report must hard-error.
  auto rows = harness::parse_results_csv(csv);
  rows[0].pcie_const_sum_ns += 1;
  CHECK_THROWS_AS(harness::render_report(harness::results_csv(rows)),
                  std::logic_error);

  // Empty input renders an empty report.
  CHECK(harness::render_report(
            csv.substr(0, csv.find('\n') + 1)) == "");
}

TEST_CASE("cli: run writes a CSV and is deterministic across processes") {
  std::string cfg_path = "/tmp/stormsim_test_cfg.ini";
  {
    std::ofstream out(cfg_path);
    out << minimal_config("[output]\nresults = /tmp/stormsim_test_out.csv\n");
  }
  CHECK(run_cli("run --config " + cfg_path) == 0);
  std::string first = slurp("/tmp/stormsim_test_out.csv");
  CHECK(first.find("schema_version") == 0);
  CHECK(run_cli("run --config " + cfg_path) == 0);
  CHECK(slurp("/tmp/stormsim_test_out.csv") == first);
}

TEST_CASE("cli: invalid preset key exits 2 with no partial output") {
  std::string bad_preset = "/tmp/stormsim_bad.preset";
  {
    std::ofstream out(bad_preset);
    out << "not_a_real_key = 5\n";
  }
  std::string cfg_path = "/tmp/stormsim_bad_cfg.ini";
  {
    std::ofstream out(cfg_path);
    out << "[experiment]\nkind = kv_lookups\n[preset]\nfile = " << bad_preset
        << "\n[output]\nresults = /tmp/stormsim_bad_out.csv\n";
  }
  std::remove("/tmp/stormsim_bad_out.csv");
  CHECK(run_cli("run --config " + cfg_path) == 2);
  std::ifstream probe("/tmp/stormsim_bad_out.csv");
  CHECK_FALSE(probe.good());
}

TEST_CASE("cli: report on an empty results CSV exits 0 with empty output") {
  std::string csv_path = "/tmp/stormsim_empty.csv";
  {
    auto cfg = harness::parse_config(minimal_config(), "<string>");
    auto out = harness::run_experiment(cfg);
    std::string full = harness::results_csv(out.rows);
    std::ofstream f(csv_path);
    f << full.substr(0, full.find('\n') + 1);  // header only
  }
  CHECK(run_cli("report --results " + csv_path +
                " --out /tmp/stormsim_empty_report.txt") == 0);
  CHECK(slurp("/tmp/stormsim_empty_report.txt").empty());
}

TEST_CASE("cli: fit prints residuals and writes a loadable preset") {
  CHECK(run_cli("fit --anchors " + kData + "/anchors/cx4roce.csv --template " +
                kData + "/presets/cx4roce.preset --out /tmp/stormsim_fit.preset") ==
        0);
  auto fitted = nic::load_preset("/tmp/stormsim_fit.preset");
  CHECK(fitted.wire_prop_ns > 0);
}
