#include "stormsim/harness/results.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace stormsim::harness {

namespace {

const char* kHeader =
    "schema_version,experiment,node_count,connections,ops,"
    "throughput_ops_per_us_per_machine,p50_latency_ns,p99_latency_ns,"
    "abort_rate,cache_hit_rate,path_read_only,path_read_then_rpc,"
    "path_rpc_only,pcie_const_sum_ns,pcie_var_sum_ns,net_const_sum_ns,"
    "net_var_sum_ns,breakdown_total_sum_ns,breakdown_ops";

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

ResultRow row_from_metrics(const std::string& experiment,
                           const wl::RunMetrics& m) {
  ResultRow r;
  r.experiment = experiment;
  r.node_count = m.node_count;
  r.connections = m.connections;
  r.ops = m.ops;
  r.throughput_ops_per_us_per_machine = m.throughput_ops_per_us_per_machine;
  r.p50_latency_ns = m.p50_latency_ns;
  r.p99_latency_ns = m.p99_latency_ns;
  r.abort_rate = m.abort_rate;
  r.cache_hit_rate = m.cache_hit_rate;
  r.path_read_only = m.paths.path_read_only;
  r.path_read_then_rpc = m.paths.path_read_then_rpc;
  r.path_rpc_only = m.paths.path_rpc_only;
  r.pcie_const_sum_ns = m.bucket_sums.pcie_const;
  r.pcie_var_sum_ns = m.bucket_sums.pcie_var;
  r.net_const_sum_ns = m.bucket_sums.net_const;
  r.net_var_sum_ns = m.bucket_sums.net_var;
  r.breakdown_total_sum_ns = m.bucket_sums.total();
  r.breakdown_ops = m.bucket_ops;
  return r;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << kHeader << '\n';
  for (const ResultRow& r : rows) {
    out << kResultsSchemaVersion << ',' << r.experiment << ',' << r.node_count
        << ',' << r.connections << ',' << r.ops << ','
        << fmt(r.throughput_ops_per_us_per_machine) << ',' << r.p50_latency_ns
        << ',' << r.p99_latency_ns << ',' << fmt(r.abort_rate) << ','
        << fmt(r.cache_hit_rate) << ',' << r.path_read_only << ','
        << r.path_read_then_rpc << ',' << r.path_rpc_only << ','
        << r.pcie_const_sum_ns << ',' << r.pcie_var_sum_ns << ','
        << r.net_const_sum_ns << ',' << r.net_var_sum_ns << ','
        << r.breakdown_total_sum_ns << ',' << r.breakdown_ops << '\n';
  }
  return out.str();
}

std::vector<ResultRow> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    return {};
  if (line != kHeader)
    throw std::invalid_argument("results csv: unrecognized header/schema");
  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 19)
      throw std::invalid_argument("results csv line " +
                                  std::to_string(lineno) + ": bad field count");
    if (std::stoi(f[0]) != kResultsSchemaVersion)
      throw std::invalid_argument("results csv: unsupported schema version");
    ResultRow r;
    r.experiment = f[1];
    r.node_count = std::stoul(f[2]);
    r.connections = std::stoull(f[3]);
    r.ops = std::stoull(f[4]);
    r.throughput_ops_per_us_per_machine = std::stod(f[5]);
    r.p50_latency_ns = std::stoull(f[6]);
    r.p99_latency_ns = std::stoull(f[7]);
    r.abort_rate = std::stod(f[8]);
    r.cache_hit_rate = std::stod(f[9]);
    r.path_read_only = std::stoull(f[10]);
    r.path_read_then_rpc = std::stoull(f[11]);
    r.path_rpc_only = std::stoull(f[12]);
    r.pcie_const_sum_ns = std::stoull(f[13]);
    r.pcie_var_sum_ns = std::stoull(f[14]);
    r.net_const_sum_ns = std::stoull(f[15]);
    r.net_var_sum_ns = std::stoull(f[16]);
    r.breakdown_total_sum_ns = std::stoull(f[17]);
    r.breakdown_ops = std::stoull(f[18]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace stormsim::harness
