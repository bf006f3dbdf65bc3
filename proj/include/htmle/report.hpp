#pragma once

#include "htmle/estimators.hpp"

#include <span>
#include <string>

namespace htmle {

// One JSON object per line. EIF values are omitted unless include_eif.
std::string reports_jsonl(std::span<const EstimateReport> reports, bool include_eif = false);

// Header plus one row per estimator.
std::string reports_csv(std::span<const EstimateReport> reports);

// Aligned human-readable table followed by per-estimator diagnostics.
std::string reports_table(std::span<const EstimateReport> reports);

}  // namespace htmle
