#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stormsim/nic/config.hpp"

namespace stormsim::harness {

enum class AnchorOp : std::uint8_t { RR, RPC };

struct FitAnchor {
  AnchorOp op = AnchorOp::RR;
  std::uint64_t payload_bytes = 64;
  double target_ns = 0;
  double weight = 1.0;
};

struct FitResidual {
  FitAnchor anchor;
  double model_ns = 0;
  double relative = 0;
};

struct FitResult {
  nic::NicConfig preset;
  std::vector<FitResidual> residuals;
  double max_relative = 0;
};

/// Closed-form unloaded latencies under a preset (all state lookups
/// hitting): the analytic counterpart of the event pipeline.
std::uint64_t model_rr_ns(const nic::NicConfig& cfg, std::uint64_t payload);
std::uint64_t model_rpc_ns(const nic::NicConfig& cfg, std::uint64_t payload);

/// Bounded weighted least squares over the two tunable constants
/// (pcie_write_ns and wire_prop_ns); the remaining preset fields are
/// platform constants taken from the template. Refuses anchor sets with
/// fewer rows than free parameters.
FitResult fit_preset(const std::vector<FitAnchor>& anchors,
                     const nic::NicConfig& tmpl);

std::vector<FitAnchor> parse_anchor_csv(const std::string& text);
std::vector<FitAnchor> load_anchor_csv(const std::string& path);

struct DropCalibration {
  nic::NicConfig preset;
  double achieved_drop = 0;
};

/// Bisection on miss_overlap_factor until the simulated 8-to-64
/// connection throughput drop matches `target_drop`.
DropCalibration calibrate_drop(const nic::NicConfig& base, double target_drop,
                               std::uint32_t lo = 8, std::uint32_t hi = 64,
                               int iterations = 10);

}  // namespace stormsim::harness
