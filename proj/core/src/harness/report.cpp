#include "stormsim/harness/report.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "stormsim/harness/results.hpp"

namespace stormsim::harness {

std::string render_report(const std::string& results_csv_text) {
  std::vector<ResultRow> rows = parse_results_csv(results_csv_text);
  std::ostringstream out;
  if (rows.empty()) return out.str();

  char buf[256];
  for (const ResultRow& r : rows) {
    std::uint64_t sum = r.pcie_const_sum_ns + r.pcie_var_sum_ns +
                        r.net_const_sum_ns + r.net_var_sum_ns;
    if (sum != r.breakdown_total_sum_ns)
      throw std::logic_error("report: latency buckets do not sum to total (" +
                             r.experiment + ")");
    out << "== " << r.experiment << " ==\n";
    std::snprintf(buf, sizeof buf,
                  "  nodes %u, connections %llu, ops %llu\n", r.node_count,
                  static_cast<unsigned long long>(r.connections),
                  static_cast<unsigned long long>(r.ops));
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "  throughput: %.3f ops/us/machine, p50 %llu ns, p99 %llu "
                  "ns, abort rate %.4f\n",
                  r.throughput_ops_per_us_per_machine,
                  static_cast<unsigned long long>(r.p50_latency_ns),
                  static_cast<unsigned long long>(r.p99_latency_ns),
                  r.abort_rate);
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "  paths: read_only %llu, read_then_rpc %llu, rpc_only "
                  "%llu; NIC cache hit rate %.4f\n",
                  static_cast<unsigned long long>(r.path_read_only),
                  static_cast<unsigned long long>(r.path_read_then_rpc),
                  static_cast<unsigned long long>(r.path_rpc_only),
                  r.cache_hit_rate);
    out << buf;
    if (r.breakdown_total_sum_ns > 0) {
      double total = static_cast<double>(r.breakdown_total_sum_ns);
      double pcie =
          static_cast<double>(r.pcie_const_sum_ns + r.pcie_var_sum_ns);
      std::snprintf(
          buf, sizeof buf,
          "  latency attribution: pcie_const %.1f%%, pcie_var %.1f%%, "
          "net_const %.1f%%, net_var %.1f%%\n",
          100.0 * r.pcie_const_sum_ns / total,
          100.0 * r.pcie_var_sum_ns / total,
          100.0 * r.net_const_sum_ns / total,
          100.0 * r.net_var_sum_ns / total);
      out << buf;
      std::snprintf(buf, sizeof buf, "  PCIe share: %.1f%%\n",
                    100.0 * pcie / total);
      out << buf;
      if (r.breakdown_ops > 0) {
        std::snprintf(buf, sizeof buf,
                      "  mean attributed latency: %.1f ns over %llu transfers\n",
                      total / static_cast<double>(r.breakdown_ops),
                      static_cast<unsigned long long>(r.breakdown_ops));
        out << buf;
      }
    }
  }
  return out.str();
}

}  // namespace stormsim::harness
