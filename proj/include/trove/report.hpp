#pragma once

#include <string>

#include <json.hpp>

#include "trove/metrics.hpp"

namespace trove {

/// CSV with one row per cell ("overall" first, then "axis=value" rows) and a
/// fixed 14-column layout:
///   cell, macro_track_p, macro_track_r, macro_track_f1,
///         micro_track_p, micro_track_r, micro_track_f1,
///         macro_relation_p, macro_relation_r, macro_relation_f1,
///         micro_relation_p, micro_relation_r, micro_relation_f1, overall_f1
std::string report_to_csv(const MetricReport& report);

/// Human-readable aligned table of the same cells.
std::string report_to_text(const MetricReport& report);

nlohmann::json report_to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);

}  // namespace trove
