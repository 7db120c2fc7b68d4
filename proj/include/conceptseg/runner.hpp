#pragma once

#include "conceptseg/agent.hpp"
#include "conceptseg/backend.hpp"
#include "conceptseg/components.hpp"
#include "conceptseg/datasets.hpp"
#include "conceptseg/metrics.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace conceptseg {

struct RunSpec {
    std::string method_id;
    PromptMode prompt_mode = PromptMode::Text;
    /// Backend reference as given on the command line; recorded, not resolved here.
    std::string backend;
    std::filesystem::path manifest;
    Split split = Split::Test;
    Connectivity connectivity = Connectivity::Eight;
    /// Split seed used when the manifest carries no assignment.
    std::uint64_t seed = 0;
    /// Score empty-GT frames under TEXT (both-empty gives 1.0). 3D TEXT runs
    /// always score every frame so volume Dice sees false positives.
    bool score_empty_gt = false;
    Aggregation aggregation = Aggregation::Volume;
    int jobs = 1;

    nlohmann::json to_json() const;
    /// Rejects unknown keys.
    static RunSpec from_json(const nlohmann::json& j);
};

struct SkippedUnit {
    EvalUnitRef ref;
    std::string reason;
};

struct FailedUnit {
    EvalUnitRef ref;
    ErrorCode code = ErrorCode::BackendFailure;
    std::string message;
};

struct RunResult {
    RunSpec spec;
    std::string dataset_id;
    std::string backend_id;
    std::size_t unit_count = 0;
    std::vector<EvalRow> rows;
    std::vector<SkippedUnit> skipped;
    std::vector<FailedUnit> failed;

    /// rows + skipped + failed == unit_count.
    bool covers_all_units() const noexcept {
        return rows.size() + skipped.size() + failed.size() == unit_count;
    }
};

/// The prompt a unit receives under `mode`. Throws NoTarget for box modes on an
/// empty mask.
PromptBundle build_prompt(PromptMode mode, const ConceptPhrase& phrase, const BinaryMask& gt,
                          Connectivity connectivity);

/// One backend call per (case, target, frame) of the chosen split. Backend errors
/// mark the unit failed and the run continues. Throws UnsupportedMode up front
/// when the backend cannot serve the mode.
RunResult run_eval(const RunSpec& spec, const DatasetManifest& manifest,
                   SegmentationBackend& backend);
/// Loads spec.manifest strictly first.
RunResult run_eval(const RunSpec& spec, SegmentationBackend& backend);

/// Writes spec.json, config.json, rows.csv, summary.json, failures.log and
/// conformance.txt under <out_root>/<method>-<hash>, where the hash covers the
/// spec and the resolved config. Returns the directory.
std::filesystem::path write_run_artifacts(const RunResult& result, const nlohmann::json& config,
                                          const std::filesystem::path& out_root);

/// Content-addressed directory name for a run.
std::string run_directory_name(const RunSpec& spec, const nlohmann::json& config);

struct AgentRunSpec {
    std::string method_id = "agent";
    std::string mllm;
    std::string backend;
    std::filesystem::path manifest;
    Split split = Split::Test;
    std::uint64_t seed = 0;
    int budget = kDefaultAgentBudget;
    bool score_empty_gt = false;
    int jobs = 1;

    nlohmann::json to_json() const;
};

struct AgentRunResult {
    AgentRunSpec spec;
    std::string dataset_id;
    std::size_t unit_count = 0;
    std::vector<EvalRow> rows;
    std::vector<SkippedUnit> skipped;
    std::vector<FailedUnit> failed;
    std::map<std::string, std::size_t> terminations;

    bool covers_all_units() const noexcept {
        return rows.size() + skipped.size() + failed.size() == unit_count;
    }
};

/// One agent session per eval unit with the target phrase as the query. The
/// ground truth never reaches the MLLM; it only selects skipped units and scores
/// the final mask once the session has ended. Rows carry
/// prompt_mode "AGENT". Transcripts are saved under `transcript_dir` when given.
AgentRunResult run_agent_eval(const AgentRunSpec& spec, const DatasetManifest& manifest,
                              SegmentationBackend& backend, MllmClient& mllm,
                              const std::filesystem::path& transcript_dir = {});

/// Content-addressed directory name for an agent run.
std::string agent_run_directory_name(const AgentRunSpec& spec, const nlohmann::json& config);
/// Writes spec.json, config.json, rows.csv, summary.json (with termination
/// counts) and failures.log into `dir`. Transcripts are written by run_agent_eval.
void write_agent_artifacts(const AgentRunResult& result, const nlohmann::json& config,
                           const std::filesystem::path& dir);

/// Declarative training descriptor for external infrastructure. Config keys:
/// "frozen", "trainable" (component lists), "base_model", "datasets".
/// Unknown keys or component names throw SchemaViolation.
nlohmann::json emit_finetune_protocol(const nlohmann::json& config = nlohmann::json::object());
/// Validates a descriptor and returns its warnings.
std::vector<std::string> validate_finetune_protocol(const nlohmann::json& document);

} // namespace conceptseg
