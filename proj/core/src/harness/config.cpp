#include "stormsim/harness/config.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace stormsim::harness {

const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::KvLookups: return "kv_lookups";
    case ExperimentKind::Tatp: return "tatp";
    case ExperimentKind::SyncMirroring: return "sync_mirroring";
    case ExperimentKind::RandomReads: return "random_reads";
    case ExperimentKind::Emulation: return "emulation";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& origin, int line,
                       const std::string& what) {
  throw std::invalid_argument(origin + ":" + std::to_string(line) + ": " +
                              what);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

std::uint64_t to_u64(const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t r = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("not an integer");
  return r;
}

double to_f64(const std::string& v) {
  std::size_t pos = 0;
  double r = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("not a number");
  return r;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("not a boolean");
}

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> s = {
      {"experiment",
       {
           {"kind",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "kv_lookups") c.kind = ExperimentKind::KvLookups;
              else if (v == "tatp") c.kind = ExperimentKind::Tatp;
              else if (v == "sync_mirroring")
                c.kind = ExperimentKind::SyncMirroring;
              else if (v == "random_reads")
                c.kind = ExperimentKind::RandomReads;
              else if (v == "emulation") c.kind = ExperimentKind::Emulation;
              else throw std::invalid_argument("unknown experiment kind");
            }},
           {"seed",
            [](ExperimentConfig& c, const std::string& v) {
              c.seed = to_u64(v);
            }},
       }},
      {"preset",
       {
           {"file",
            [](ExperimentConfig& c, const std::string& v) {
              c.preset_path = v;
            }},
       }},
      {"topology",
       {
           {"nodes",
            [](ExperimentConfig& c, const std::string& v) {
              c.nodes = static_cast<std::uint32_t>(to_u64(v));
            }},
           {"threads_per_node",
            [](ExperimentConfig& c, const std::string& v) {
              c.threads_per_node = static_cast<std::uint32_t>(to_u64(v));
            }},
           {"coroutines_per_thread",
            [](ExperimentConfig& c, const std::string& v) {
              c.coroutines_per_thread = static_cast<std::uint32_t>(to_u64(v));
            }},
           {"virtual_machines",
            [](ExperimentConfig& c, const std::string& v) {
              c.virtual_machines = static_cast<std::uint32_t>(to_u64(v));
            }},
       }},
      {"table",
       {
           {"key_count",
            [](ExperimentConfig& c, const std::string& v) {
              c.key_count = to_u64(v);
            }},
           {"bucket_width",
            [](ExperimentConfig& c, const std::string& v) {
              c.bucket_width = static_cast<std::uint32_t>(to_u64(v));
            }},
           {"value_bytes",
            [](ExperimentConfig& c, const std::string& v) {
              c.value_bytes = static_cast<std::uint32_t>(to_u64(v));
            }},
           {"occupancy_target",
            [](ExperimentConfig& c, const std::string& v) {
              c.occupancy_target = to_f64(v);
            }},
           {"lookup_mode",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "one_two_sided") c.rpc_only = false;
              else if (v == "rpc_only") c.rpc_only = true;
              else throw std::invalid_argument("unknown lookup mode");
            }},
           {"farm_mode",
            [](ExperimentConfig& c, const std::string& v) {
              c.farm_mode = to_bool(v);
            }},
       }},
      {"workload",
       {
           {"op_count",
            [](ExperimentConfig& c, const std::string& v) {
              c.op_count = to_u64(v);
            }},
           {"distribution",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "uniform") c.distribution = wl::KeyDistribution::Uniform;
              else if (v == "zipf") c.distribution = wl::KeyDistribution::Zipf;
              else throw std::invalid_argument("unknown distribution");
            }},
           {"zipf_theta",
            [](ExperimentConfig& c, const std::string& v) {
              c.zipf_theta = to_f64(v);
            }},
           {"read_frac",
            [](ExperimentConfig& c, const std::string& v) {
              c.mix.read_frac = to_f64(v);
            }},
           {"write_frac",
            [](ExperimentConfig& c, const std::string& v) {
              c.mix.write_frac = to_f64(v);
            }},
           {"insert_frac",
            [](ExperimentConfig& c, const std::string& v) {
              c.mix.insert_frac = to_f64(v);
            }},
           {"delete_frac",
            [](ExperimentConfig& c, const std::string& v) {
              c.mix.delete_frac = to_f64(v);
            }},
           {"message_cachelines",
            [](ExperimentConfig& c, const std::string& v) {
              c.message_cachelines = static_cast<std::uint32_t>(to_u64(v));
            }},
           {"connections",
            [](ExperimentConfig& c, const std::string& v) {
              c.connections = static_cast<std::uint32_t>(to_u64(v));
            }},
           {"data_bytes",
            [](ExperimentConfig& c, const std::string& v) {
              c.data_bytes = to_u64(v);
            }},
           {"warmup_frac",
            [](ExperimentConfig& c, const std::string& v) {
              c.warmup_frac = to_f64(v);
            }},
       }},
      {"output",
       {
           {"results",
            [](ExperimentConfig& c, const std::string& v) {
              c.results_path = v;
            }},
       }},
  };
  return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text,
                              const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  bool preset_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') fail(origin, lineno, "unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!schema().count(section))
        fail(origin, lineno, "unknown section '" + section + "'");
      continue;
    }
    if (section.empty()) fail(origin, lineno, "key outside any section");
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) fail(origin, lineno, "expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    const auto& keys = schema().at(section);
    auto it = keys.find(key);
    if (it == keys.end())
      fail(origin, lineno,
           "unknown key '" + key + "' in section [" + section + "]");
    try {
      it->second(cfg, val);
    } catch (const std::exception& e) {
      fail(origin, lineno, "bad value for '" + key + "': " + e.what());
    }
    if (section == "preset" && key == "file") preset_seen = true;
  }
  if (!preset_seen)
    throw std::invalid_argument(origin + ": missing [preset] file");

  // Resolve the preset relative to the config file location.
  std::filesystem::path p(cfg.preset_path);
  if (p.is_relative() && origin != "<string>") {
    std::filesystem::path dir = std::filesystem::path(origin).parent_path();
    std::filesystem::path joined = dir / p;
    if (std::filesystem::exists(joined)) p = joined;
  }
  cfg.nic = nic::load_preset(p.string());
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace stormsim::harness
