#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stormsim/wl/runners.hpp"

namespace stormsim::harness {

/// One experiment result; serialized as a fixed, versioned CSV row.
/// Bucket columns are exact integer nanosecond sums so the identity
/// "buckets sum to total" survives serialization.
struct ResultRow {
  std::string experiment;
  std::uint32_t node_count = 0;
  std::uint64_t connections = 0;
  std::uint64_t ops = 0;
  double throughput_ops_per_us_per_machine = 0;
  std::uint64_t p50_latency_ns = 0;
  std::uint64_t p99_latency_ns = 0;
  double abort_rate = 0;
  double cache_hit_rate = 0;
  std::uint64_t path_read_only = 0;
  std::uint64_t path_read_then_rpc = 0;
  std::uint64_t path_rpc_only = 0;
  std::uint64_t pcie_const_sum_ns = 0;
  std::uint64_t pcie_var_sum_ns = 0;
  std::uint64_t net_const_sum_ns = 0;
  std::uint64_t net_var_sum_ns = 0;
  std::uint64_t breakdown_total_sum_ns = 0;
  std::uint64_t breakdown_ops = 0;
};

constexpr int kResultsSchemaVersion = 1;

ResultRow row_from_metrics(const std::string& experiment,
                           const wl::RunMetrics& m);

std::string results_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_results_csv(const std::string& text);

}  // namespace stormsim::harness
