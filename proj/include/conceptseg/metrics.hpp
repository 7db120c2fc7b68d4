#pragma once

#include "conceptseg/core.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace conceptseg {

/// Pixel tallies behind a Dice score; summing them across frames gives voxel Dice.
struct DiceCounts {
    std::uint64_t intersection = 0;
    std::uint64_t pred = 0;
    std::uint64_t gt = 0;

    DiceCounts& operator+=(const DiceCounts& o) {
        intersection += o.intersection;
        pred += o.pred;
        gt += o.gt;
        return *this;
    }
    /// 2|P∩G| / (|P|+|G|); 1.0 when both are empty.
    double dice() const noexcept {
        const auto denom = pred + gt;
        return denom == 0 ? 1.0 : 2.0 * static_cast<double>(intersection) / static_cast<double>(denom);
    }
    friend bool operator==(const DiceCounts&, const DiceCounts&) = default;
};

DiceCounts dice_counts(const BinaryMask& pred, const BinaryMask& gt);
double dice(const BinaryMask& pred, const BinaryMask& gt);

/// Dice over the concatenation of all frames.
double volume_dice(std::span<const BinaryMask> pred_frames, std::span<const BinaryMask> gt_frames);
/// Mean of per-frame Dice; the alternate 3D aggregation.
double slice_mean_dice(std::span<const BinaryMask> pred_frames,
                       std::span<const BinaryMask> gt_frames);

enum class Aggregation { Volume, SliceMean };
std::string_view to_string(Aggregation a);
Aggregation aggregation_from_string(std::string_view text);

struct EvalRow {
    std::string dataset_id;
    std::string case_id;
    std::string target_id;
    int frame_index = 0;
    std::string method_id;
    /// TEXT, TEXT_BOX, BOX or AGENT.
    std::string prompt_mode;
    double dice = 0.0;
    std::optional<DiceCounts> counts;
};

struct MethodSummary {
    std::string method_id;
    std::string dataset_id;
    double mean_dice = 0.0;
    std::size_t n_units = 0;
};

/// Per-case score: frames reduced per target (voxel Dice or slice mean), then
/// the mean over targets.
struct CaseScore {
    std::string dataset_id;
    std::string method_id;
    std::string case_id;
    double dice = 0.0;
};

std::vector<CaseScore> case_scores(std::span<const EvalRow> rows,
                                   Aggregation aggregation = Aggregation::Volume);

/// Mean of case scores per (dataset, method), sorted by dataset then method.
/// Throws InvalidArgument on duplicate row keys.
std::vector<MethodSummary> summarize(std::span<const EvalRow> rows,
                                     Aggregation aggregation = Aggregation::Volume);

/// subject.mean_dice - max(others.mean_dice). Throws EmptyGroup / DatasetMismatch.
double delta_vs_best(const MethodSummary& subject, std::span<const MethodSummary> others);

struct CaseDelta {
    std::string case_id;
    double dice_a = 0.0;
    double dice_b = 0.0;
    double delta = 0.0;
};

/// Per-case comparison ordered by case_id. Throws CaseSetMismatch.
std::vector<CaseDelta> per_case_series(std::span<const EvalRow> rows_a,
                                       std::span<const EvalRow> rows_b,
                                       Aggregation aggregation = Aggregation::Volume);

/// Round half to even at `digits` decimals (table precision is 4).
double round_half_even(double value, int digits = 4);
/// Fixed 4-decimal rendering after round_half_even.
std::string format_dice(double value);

void write_rows_csv(const std::filesystem::path& path, std::span<const EvalRow> rows);
std::string rows_to_csv(std::span<const EvalRow> rows);
std::vector<EvalRow> read_rows_csv(const std::filesystem::path& path);
std::vector<EvalRow> rows_from_csv(const std::string& text);

std::string series_to_csv(std::span<const CaseDelta> series);

} // namespace conceptseg
