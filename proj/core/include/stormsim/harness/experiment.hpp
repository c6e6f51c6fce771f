#pragma once

#include <string>
#include <vector>

#include "stormsim/harness/config.hpp"
#include "stormsim/harness/results.hpp"

namespace stormsim::harness {

struct RunOutput {
  std::vector<ResultRow> rows;
  std::string event_log;  // non-empty when log capture was requested
};

/// Execute one experiment; module invariants are revalidated before the
/// result is produced. Throws on any violation.
RunOutput run_experiment(const ExperimentConfig& cfg,
                         bool capture_event_log = false);

enum class SweepAxis { MsgSize, Connections, Nodes };

SweepAxis parse_axis(const std::string& name);

RunOutput run_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                    const std::vector<std::uint64_t>& values);

}  // namespace stormsim::harness
