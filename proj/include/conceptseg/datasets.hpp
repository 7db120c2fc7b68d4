#pragma once

#include "conceptseg/core.hpp"
#include "conceptseg/prompts.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace conceptseg {

enum class Dimension { D2, D3 };
enum class Split { Train, Test, Unassigned };

std::string_view to_string(Dimension d);
std::string_view to_string(Split s);
Split split_from_string(std::string_view text);

struct TargetSpec {
    std::string target_id;
    ConceptPhrase phrase;
};

struct CaseRecord {
    std::string case_id;
    /// Paths as written in the manifest (relative to its directory).
    std::vector<std::filesystem::path> image_refs;
    std::map<std::string, std::vector<std::filesystem::path>> gt_refs;
    Split split = Split::Unassigned;
};

struct DatasetManifest {
    std::string dataset_id;
    std::string modality;
    Dimension dimension = Dimension::D2;
    std::vector<TargetSpec> targets;
    std::vector<CaseRecord> cases;
    /// Directory that relative refs resolve against.
    std::filesystem::path base_dir;
    /// How multi-label source files were decomposed into per-target masks.
    std::string gt_decomposition;
    std::optional<std::uint64_t> split_seed;

    std::filesystem::path resolve(const std::filesystem::path& ref) const;
    const TargetSpec* find_target(std::string_view target_id) const;
};

enum class FileCheck { Strict, Lazy };

struct ValidationCheck {
    std::string name;
    bool passed = true;
    ErrorCode code = ErrorCode::SchemaViolation;
    std::vector<std::string> details;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    std::optional<DatasetManifest> manifest;

    bool ok() const;
    const ValidationCheck* first_failure() const;
};

/// Runs every manifest invariant and records each one's outcome. Never throws
/// for content problems; an unreadable path throws MissingFile.
ValidationReport validate_manifest(const std::filesystem::path& path,
                                   FileCheck files = FileCheck::Strict,
                                   const PhraseRegistry& registry = PhraseRegistry::builtin());
ValidationReport validate_manifest_json(const nlohmann::json& j,
                                        const std::filesystem::path& base_dir,
                                        FileCheck files = FileCheck::Strict,
                                        const PhraseRegistry& registry = PhraseRegistry::builtin());

/// Throws the first failing check's error code.
DatasetManifest load_manifest(const std::filesystem::path& path,
                              FileCheck files = FileCheck::Strict,
                              const PhraseRegistry& registry = PhraseRegistry::builtin());

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
/// Writes refs relative to the destination's directory.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Number of training cases for N cases: ceil(0.8 N).
std::size_t train_count(std::size_t n_cases);

/// Assigns train/test 4:1 by ranking cases on a seeded hash of their id. Depends
/// only on (seed, case-id set). Throws SplitAlreadyAssigned if any case has a split.
DatasetManifest split_cases(const DatasetManifest& manifest, std::uint64_t seed);

struct EvalUnitRef {
    std::string case_id;
    std::string target_id;
    int frame_index = 0;
    std::filesystem::path image_path;
    std::filesystem::path gt_path;
};

struct EvalUnit {
    EvalUnitRef ref;
    RasterImage image;
    BinaryMask gt;
};

/// Every (case, target, frame) of the chosen split, ordered by case_id, then the
/// declared target order, then frame. `split == nullopt` selects all cases.
std::vector<EvalUnitRef> enumerate_eval_units(const DatasetManifest& manifest,
                                              std::optional<Split> split);

/// Reads the frame and its mask; throws Io / MissingFile / DimensionMismatch.
EvalUnit load_eval_unit(const EvalUnitRef& ref);

void iter_eval_units(const DatasetManifest& manifest, std::optional<Split> split,
                     const std::function<void(const EvalUnit&)>& visit);

} // namespace conceptseg
