#pragma once

#include "conceptseg/metrics.hpp"
#include "conceptseg/prompts.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace conceptseg {

/// One published results table: per-method rows of mean Dice over `datasets`,
/// plus the printed signed deltas for subject methods.
struct ReferenceTable {
    std::string id;
    std::string title;
    std::vector<std::string> datasets;
    std::vector<std::string> reference_methods;
    std::vector<std::string> subjects;
    std::map<std::string, std::vector<double>> rows;
    std::map<std::string, std::vector<double>> arrows;

    std::vector<MethodSummary> summaries() const;
};

struct CellRef {
    std::string table;
    std::string dataset;
    std::string method;
    std::string note;

    bool matches(const std::string& t, const std::string& d, const std::string& m) const {
        return table == t && dataset == d && method == m;
    }
};

struct ReferenceFixture {
    std::vector<ReferenceTable> tables;
    std::vector<CellRef> known_discrepancies;
    std::vector<CellRef> same_run_unknown;

    /// Throws SchemaViolation on ragged rows, cells outside [0,1] or non-finite arrows.
    static ReferenceFixture from_json(const nlohmann::json& j);
    static ReferenceFixture load(const std::filesystem::path& path);
    /// The compiled-in copy of fixtures/reference_tables.json.
    static const ReferenceFixture& builtin();

    const ReferenceTable& table(const std::string& id) const;
    bool is_known_discrepancy(const std::string& t, const std::string& d, const std::string& m) const;
};

struct ArrowCheck {
    std::string table;
    std::string dataset;
    std::string method;
    double recomputed = 0.0;
    double printed = 0.0;
    double abs_diff = 0.0;
    bool known_discrepancy = false;
};

inline constexpr double kArrowTolerance = 1e-4;

/// Recomputes every printed arrow as subject minus the best reference method.
std::vector<ArrowCheck> check_arrow_consistency(const ReferenceFixture& fixture);
std::vector<ArrowCheck> check_arrow_consistency(const ReferenceTable& table,
                                                const ReferenceFixture& fixture);

bool within_tolerance(const ArrowCheck& c, double tolerance = kArrowTolerance);
/// Cells off by more than the tolerance that are not declared known.
std::vector<ArrowCheck> unexpected_discrepancies(const std::vector<ArrowCheck>& checks,
                                                 double tolerance = kArrowTolerance);

struct PhraseCheck {
    std::string dataset_id;
    std::string target_id;
    std::string phrase;
    bool passed = false;
    std::string message;
};

/// Runs validate_phrase over every raw phrase string of a registry document,
/// then over `injected` (reported with dataset_id "<injected>").
std::vector<PhraseCheck> check_phrase_fixture(const nlohmann::json& registry_doc,
                                              const std::vector<std::string>& injected = {});
/// Same, against the compiled-in registry.
std::vector<PhraseCheck> check_phrase_fixture(const std::vector<std::string>& injected = {});

std::string format_arrow_report(const std::vector<ArrowCheck>& checks);

} // namespace conceptseg
