#include "stormsim/nic/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace stormsim::nic {

void NicConfig::validate() const {
  auto bad = [](const std::string& what) {
    throw std::invalid_argument("NicConfig: " + what);
  };
  if (cache_capacity_bytes == 0) bad("cache_capacity_bytes must be > 0");
  if (num_pus == 0) bad("num_pus must be > 0");
  if (pu_service_ns == 0) bad("pu_service_ns must be > 0");
  if (cache_hit_ns == 0) bad("cache_hit_ns must be > 0");
  if (cache_miss_ns <= cache_hit_ns) bad("cache_miss_ns must exceed cache_hit_ns");
  if (pcie_write_ns == 0) bad("pcie_write_ns must be > 0");
  if (pcie_dma_rt_ns == 0) bad("pcie_dma_rt_ns must be > 0");
  if (pcie_per_byte_ns <= 0) bad("pcie_per_byte_ns must be > 0");
  if (wire_prop_ns == 0) bad("wire_prop_ns must be > 0");
  if (wire_per_byte_ns <= 0) bad("wire_per_byte_ns must be > 0");
  if (miss_overlap_factor <= 0.0 || miss_overlap_factor > 1.0)
    bad("miss_overlap_factor must be in (0,1]");
  if (mtt_entry_bytes == 0 || mpt_entry_bytes == 0)
    bad("mtt/mpt entry bytes must be > 0");
}

namespace {

struct Field {
  std::function<void(NicConfig&, const std::string&)> set;
  std::function<std::string(const NicConfig&)> get;
};

std::uint64_t parse_u64(const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t r = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return r;
}

double parse_f64(const std::string& v) {
  std::size_t pos = 0;
  double r = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return r;
}

std::string fmt_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
#define U64_FIELD(name)                                                  \
  {#name,                                                                \
   {[](NicConfig& c, const std::string& v) { c.name = parse_u64(v); },   \
    [](const NicConfig& c) { return std::to_string(c.name); }}}
#define U32_FIELD(name)                                                  \
  {#name,                                                                \
   {[](NicConfig& c, const std::string& v) {                             \
      c.name = static_cast<std::uint32_t>(parse_u64(v));                 \
    },                                                                   \
    [](const NicConfig& c) { return std::to_string(c.name); }}}
#define F64_FIELD(name)                                                  \
  {#name,                                                                \
   {[](NicConfig& c, const std::string& v) { c.name = parse_f64(v); },   \
    [](const NicConfig& c) { return fmt_f64(c.name); }}}
      U64_FIELD(cache_capacity_bytes),
      U32_FIELD(num_pus),
      U64_FIELD(pu_service_ns),
      U64_FIELD(cache_hit_ns),
      U64_FIELD(cache_miss_ns),
      U64_FIELD(pcie_write_ns),
      U64_FIELD(pcie_dma_rt_ns),
      F64_FIELD(pcie_per_byte_ns),
      U64_FIELD(wire_prop_ns),
      F64_FIELD(wire_per_byte_ns),
      F64_FIELD(miss_overlap_factor),
      U32_FIELD(mtt_entry_bytes),
      U32_FIELD(mpt_entry_bytes),
      U32_FIELD(recv_wqe_bytes),
      U64_FIELD(host_rpc_ns),
      U64_FIELD(host_repost_ns),
#undef U64_FIELD
#undef U32_FIELD
#undef F64_FIELD
  };
  return f;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

NicConfig parse_preset(const std::string& text, const std::string& origin) {
  NicConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end())
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": unknown preset key '" + key + "'");
    try {
      it->second.set(cfg, val);
    } catch (const std::exception& e) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": bad value for '" + key + "': " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

NicConfig load_preset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open preset file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_preset(ss.str(), path);
}

std::string preset_to_string(const NicConfig& cfg) {
  std::ostringstream out;
  for (const auto& [key, field] : fields())
    out << key << " = " << field.get(cfg) << "\n";
  return out.str();
}

void save_preset(const NicConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write preset file: " + path);
  out << preset_to_string(cfg);
}

}  // namespace stormsim::nic
