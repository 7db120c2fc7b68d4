#pragma once

#include "conceptseg/metrics.hpp"

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace conceptseg {

/// Arrow cell for a subject method: its delta against the best non-subject
/// method on the same dataset.
struct DeltaCell {
    std::string dataset_id;
    std::string method_id;
    double mean_dice = 0.0;
    std::optional<double> delta;
};

/// Deltas for every subject summary that has at least one non-subject peer.
std::vector<DeltaCell> compute_deltas(std::span<const MethodSummary> summaries,
                                      const std::set<std::string>& subjects);

/// "↑0.0497" / "↓0.3016" / "=0.0000" after 4-decimal half-even rounding.
std::string arrow_text(double delta);

/// Plain-text table: methods as rows (non-subjects first), datasets as columns,
/// arrows on subject rows.
std::string render_delta_table(std::span<const MethodSummary> summaries,
                               const std::set<std::string>& subjects);

/// Convention flags recorded alongside every report.
std::string conventions_text(Aggregation aggregation, int connectivity);

nlohmann::json summaries_to_json(std::span<const MethodSummary> summaries,
                                 const std::set<std::string>& subjects, Aggregation aggregation,
                                 int connectivity);
std::string summaries_to_csv(std::span<const MethodSummary> summaries);

/// Accepts either a bare array of summaries or {"summaries": [...]}.
std::vector<MethodSummary> summaries_from_json(const nlohmann::json& j);
std::vector<MethodSummary> load_summaries(const std::filesystem::path& path);

/// Radar-chart data: {"axes": [datasets], "series": [{"method", "values"}]}; null where absent.
nlohmann::json radar_series(std::span<const MethodSummary> summaries);

} // namespace conceptseg
