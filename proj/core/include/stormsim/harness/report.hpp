#pragma once

#include <string>

namespace stormsim::harness {

/// Render a human-readable breakdown report from a results CSV. Checks
/// the bucket-sum identity on every row and throws on violation.
std::string render_report(const std::string& results_csv_text);

}  // namespace stormsim::harness
