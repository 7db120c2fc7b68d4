#include "conceptseg/runner.hpp"

#include "conceptseg/codec.hpp"
#include "conceptseg/report.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

namespace conceptseg {

using nlohmann::json;

json RunSpec::to_json() const {
    return {{"method_id", method_id},
            {"prompt_mode", std::string(conceptseg::to_string(prompt_mode))},
            {"backend", backend},
            {"manifest", manifest.generic_string()},
            {"split", std::string(conceptseg::to_string(split))},
            {"connectivity", static_cast<int>(connectivity)},
            {"seed", seed},
            {"score_empty_gt", score_empty_gt},
            {"aggregation", std::string(conceptseg::to_string(aggregation))},
            {"jobs", jobs}};
}

RunSpec RunSpec::from_json(const json& j) {
    static const std::set<std::string> known{"method_id", "prompt_mode", "backend",
                                             "manifest",  "split",       "connectivity",
                                             "seed",      "score_empty_gt", "aggregation",
                                             "jobs"};
    if (!j.is_object()) {
        throw Error(ErrorCode::SchemaViolation, "run spec must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw Error(ErrorCode::SchemaViolation, "unknown run spec key: " + key);
        }
    }
    RunSpec s;
    try {
        s.method_id = j.at("method_id").get<std::string>();
        s.prompt_mode = prompt_mode_from_string(j.value("prompt_mode", std::string("TEXT")));
        s.backend = j.value("backend", std::string{});
        s.manifest = j.value("manifest", std::string{});
        s.split = split_from_string(j.value("split", std::string("test")));
        s.connectivity = connectivity_from_int(j.value("connectivity", 8));
        s.seed = j.value("seed", std::uint64_t{0});
        s.score_empty_gt = j.value("score_empty_gt", false);
        s.aggregation = aggregation_from_string(j.value("aggregation", std::string("volume")));
        s.jobs = j.value("jobs", 1);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("run spec: ") + e.what());
    }
    if (s.split == Split::Unassigned) {
        throw Error(ErrorCode::InvalidArgument, "run split must be train or test");
    }
    return s;
}

PromptBundle build_prompt(PromptMode mode, const ConceptPhrase& phrase, const BinaryMask& gt,
                          Connectivity connectivity) {
    switch (mode) {
    case PromptMode::Text:
        return PromptBundle::text(phrase);
    case PromptMode::TextBox:
        return PromptBundle::text_box(phrase, largest_component_box(gt, connectivity));
    case PromptMode::Box:
        return PromptBundle::box_only(largest_component_box(gt, connectivity));
    }
    throw Error(ErrorCode::InvalidArgument, "unknown prompt mode");
}

namespace {

using UnitOutcome = std::variant<EvalRow, SkippedUnit, FailedUnit>;

UnitOutcome evaluate_unit(const RunSpec& spec, const DatasetManifest& manifest,
                          SegmentationBackend& backend, const EvalUnitRef& ref) {
    std::optional<EvalUnit> loaded;
    try {
        loaded.emplace(load_eval_unit(ref));
    } catch (const Error& e) {
        return FailedUnit{ref, e.code(), e.what()};
    }
    const EvalUnit& unit = *loaded;
    if (unit.gt.empty()) {
        if (spec.prompt_mode != PromptMode::Text) {
            return SkippedUnit{ref, "empty ground truth: no box derivable"};
        }
        if (!spec.score_empty_gt && manifest.dimension == Dimension::D2) {
            return SkippedUnit{ref, "empty ground truth"};
        }
    }
    const TargetSpec* target = manifest.find_target(ref.target_id);
    if (target == nullptr) {
        return FailedUnit{ref, ErrorCode::RegistryMiss, "undeclared target " + ref.target_id};
    }
    const auto prompt = build_prompt(spec.prompt_mode, target->phrase, unit.gt, spec.connectivity);
    std::optional<SegmentationResult> segmented;
    try {
        segmented.emplace(backend.segment(unit.image, prompt));
    } catch (const Error& e) {
        return FailedUnit{ref, e.code(), e.what()};
    } catch (const std::exception& e) {
        return FailedUnit{ref, ErrorCode::BackendFailure, e.what()};
    }
    const SegmentationResult& result = *segmented;
    if (!result.mask.same_shape(unit.gt)) {
        return FailedUnit{ref, ErrorCode::DimensionMismatch, "backend mask extent differs from frame"};
    }
    const auto counts = dice_counts(result.mask, unit.gt);
    return EvalRow{manifest.dataset_id,
                   ref.case_id,
                   ref.target_id,
                   ref.frame_index,
                   spec.method_id,
                   std::string(to_string(spec.prompt_mode)),
                   counts.dice(),
                   counts};
}

DatasetManifest with_split(const DatasetManifest& manifest, std::uint64_t seed) {
    const bool any_assigned =
        std::any_of(manifest.cases.begin(), manifest.cases.end(),
                    [](const CaseRecord& c) { return c.split != Split::Unassigned; });
    return any_assigned ? manifest : split_cases(manifest, seed);
}

} // namespace

RunResult run_eval(const RunSpec& spec, const DatasetManifest& manifest,
                   SegmentationBackend& backend) {
    if (spec.split == Split::Unassigned) {
        throw Error(ErrorCode::InvalidArgument, "run split must be train or test");
    }
    require_mode(backend, spec.prompt_mode);

    const DatasetManifest split = with_split(manifest, spec.seed);
    const auto units = enumerate_eval_units(split, spec.split);

    std::vector<std::optional<UnitOutcome>> outcomes(units.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < units.size(); i = next++) {
            outcomes[i] = evaluate_unit(spec, split, backend, units[i]);
        }
    };
    const auto n_workers =
        static_cast<std::size_t>(std::clamp(spec.jobs, 1, 256));
    if (n_workers == 1 || units.size() < 2) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(n_workers, units.size()); ++w) {
            pool.emplace_back(worker);
        }
    }

    // Outcomes are indexed by unit order, so the result is independent of scheduling.
    RunResult out{spec, manifest.dataset_id, backend.id(), units.size(), {}, {}, {}};
    for (auto& o : outcomes) {
        std::visit(
            [&](auto&& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, EvalRow>) {
                    out.rows.push_back(std::move(v));
                } else if constexpr (std::is_same_v<T, SkippedUnit>) {
                    out.skipped.push_back(std::move(v));
                } else {
                    out.failed.push_back(std::move(v));
                }
            },
            *o);
    }
    return out;
}

RunResult run_eval(const RunSpec& spec, SegmentationBackend& backend) {
    return run_eval(spec, load_manifest(spec.manifest), backend);
}

namespace {

std::string content_addressed_name(const std::string& method_id, const json& spec, const json& config) {
    std::string slug;
    for (char c : method_id) {
        const auto u = static_cast<unsigned char>(c);
        slug += std::isalnum(u) ? static_cast<char>(std::tolower(u)) : (c == '+' ? 'p' : '_');
    }
    if (slug.empty()) {
        slug = "run";
    }
    const json key{{"spec", spec}, {"config", config}};
    return slug + "-" + sha256_hex(key.dump()).substr(0, 12);
}

} // namespace

std::string run_directory_name(const RunSpec& spec, const json& config) {
    return content_addressed_name(spec.method_id, spec.to_json(), config);
}

std::string agent_run_directory_name(const AgentRunSpec& spec, const json& config) {
    return content_addressed_name(spec.method_id, spec.to_json(), config);
}

namespace {

std::string unit_label(const EvalUnitRef& ref) {
    return ref.case_id + "/" + ref.target_id + "/" + std::to_string(ref.frame_index);
}

} // namespace

std::filesystem::path write_run_artifacts(const RunResult& result, const json& config,
                                          const std::filesystem::path& out_root) {
    const auto dir = out_root / run_directory_name(result.spec, config);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    }
    // The frozen spec and config go first so an interrupted run still documents itself.
    write_file_atomic(dir / "spec.json", result.spec.to_json().dump(2) + "\n");
    write_file_atomic(dir / "config.json", config.dump(2) + "\n");
    write_file_atomic(dir / "rows.csv", rows_to_csv(result.rows));

    const auto summaries = summarize(result.rows, result.spec.aggregation);
    json summary = summaries_to_json(summaries, {}, result.spec.aggregation,
                                     static_cast<int>(result.spec.connectivity));
    summary["dataset_id"] = result.dataset_id;
    summary["backend_id"] = result.backend_id;
    summary["units"] = result.unit_count;
    summary["scored"] = result.rows.size();
    summary["skipped"] = result.skipped.size();
    summary["failed"] = result.failed.size();
    write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");

    std::ostringstream log;
    for (const auto& f : result.failed) {
        log << "FAILED " << unit_label(f.ref) << " " << to_string(f.code) << " " << f.message << "\n";
    }
    for (const auto& s : result.skipped) {
        log << "SKIPPED " << unit_label(s.ref) << " " << s.reason << "\n";
    }
    write_file_atomic(dir / "failures.log", log.str());

    std::string conventions =
        conventions_text(result.spec.aggregation, static_cast<int>(result.spec.connectivity));
    conventions += std::string("prompt mode = ") + std::string(to_string(result.spec.prompt_mode)) + "\n";
    conventions += std::string("empty ground truth scored = ") +
                   (result.spec.score_empty_gt ? "yes" : "no (3D text runs always)") + "\n";
    conventions += "3D boxes derived per frame from that frame's mask\n";
    write_file_atomic(dir / "conformance.txt", conventions);
    return dir;
}

json AgentRunSpec::to_json() const {
    return {{"method_id", method_id},
            {"mllm", mllm},
            {"backend", backend},
            {"manifest", manifest.generic_string()},
            {"split", std::string(conceptseg::to_string(split))},
            {"seed", seed},
            {"budget", budget},
            {"score_empty_gt", score_empty_gt},
            {"jobs", jobs}};
}

namespace {

std::string transcript_name(const EvalUnitRef& ref) {
    std::string name = ref.case_id + "__" + ref.target_id + "__" + std::to_string(ref.frame_index);
    for (auto& c : name) {
        if (c == '/' || c == '\\' || c == ' ') {
            c = '_';
        }
    }
    return name;
}

} // namespace

AgentRunResult run_agent_eval(const AgentRunSpec& spec, const DatasetManifest& manifest,
                              SegmentationBackend& backend, MllmClient& mllm,
                              const std::filesystem::path& transcript_dir) {
    if (spec.split == Split::Unassigned) {
        throw Error(ErrorCode::InvalidArgument, "run split must be train or test");
    }
    if (spec.budget < 1) {
        throw Error(ErrorCode::InvalidArgument, "agent budget must be at least 1");
    }
    const DatasetManifest split = with_split(manifest, spec.seed);
    const auto units = enumerate_eval_units(split, spec.split);

    struct Outcome {
        std::variant<EvalRow, SkippedUnit, FailedUnit> value;
        std::optional<Termination> termination;
    };
    std::vector<std::optional<Outcome>> outcomes(units.size());
    std::mutex save_mu;
    auto evaluate = [&](const EvalUnitRef& ref) -> Outcome {
        std::optional<EvalUnit> unit;
        try {
            unit.emplace(load_eval_unit(ref));
        } catch (const Error& e) {
            return {FailedUnit{ref, e.code(), e.what()}, std::nullopt};
        }
        if (unit->gt.empty() && !spec.score_empty_gt && split.dimension == Dimension::D2) {
            return {SkippedUnit{ref, "empty ground truth"}, std::nullopt};
        }
        const TargetSpec* target = split.find_target(ref.target_id);
        if (target == nullptr) {
            return {FailedUnit{ref, ErrorCode::RegistryMiss, "undeclared target " + ref.target_id},
                    std::nullopt};
        }
        std::optional<AgentTranscript> transcript;
        try {
            transcript.emplace(run_agent(unit->image, target->phrase.text(), backend, mllm, spec.budget));
        } catch (const Error& e) {
            return {FailedUnit{ref, e.code(), e.what()}, std::nullopt};
        } catch (const std::exception& e) {
            return {FailedUnit{ref, ErrorCode::Transport, e.what()}, std::nullopt};
        }
        if (!transcript_dir.empty()) {
            std::lock_guard lock(save_mu);
            save_transcript(*transcript, transcript_dir, transcript_name(ref));
        }
        // Scoring happens only here, after the session has ended.
        const BinaryMask final_mask = transcript->final_masks.empty()
                                          ? BinaryMask(unit->gt.width(), unit->gt.height())
                                          : transcript->final_masks.front();
        const auto counts = dice_counts(final_mask, unit->gt);
        return {EvalRow{split.dataset_id, ref.case_id, ref.target_id, ref.frame_index, spec.method_id,
                        "AGENT", counts.dice(), counts},
                transcript->termination};
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < units.size(); i = next++) {
            outcomes[i] = evaluate(units[i]);
        }
    };
    const auto n_workers = static_cast<std::size_t>(std::clamp(spec.jobs, 1, 256));
    if (n_workers == 1 || units.size() < 2) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(n_workers, units.size()); ++w) {
            pool.emplace_back(worker);
        }
    }

    AgentRunResult out;
    out.spec = spec;
    out.dataset_id = manifest.dataset_id;
    out.unit_count = units.size();
    for (auto& o : outcomes) {
        if (o->termination) {
            ++out.terminations[std::string(to_string(*o->termination))];
        }
        std::visit(
            [&](auto&& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, EvalRow>) {
                    out.rows.push_back(std::move(v));
                } else if constexpr (std::is_same_v<T, SkippedUnit>) {
                    out.skipped.push_back(std::move(v));
                } else {
                    out.failed.push_back(std::move(v));
                }
            },
            o->value);
    }
    return out;
}

namespace {

const std::set<std::string> kComponents{"image_encoder", "text_encoder", "detector", "tracker",
                                        "memory_bank"};

std::vector<std::string> component_list(const json& j, const char* key) {
    auto list = j.get<std::vector<std::string>>();
    for (const auto& c : list) {
        if (!kComponents.contains(c)) {
            throw Error(ErrorCode::SchemaViolation, std::string(key) + ": unknown component " + c);
        }
    }
    return list;
}

} // namespace

std::vector<std::string> validate_finetune_protocol(const json& document) {
    static const std::set<std::string> known{"schema",  "base_model", "frozen", "trainable",
                                             "phrase_constraint", "prompt_paradigms", "datasets",
                                             "warnings"};
    if (!document.is_object()) {
        throw Error(ErrorCode::SchemaViolation, "protocol must be an object");
    }
    for (const auto& [key, _] : document.items()) {
        if (!known.contains(key)) {
            throw Error(ErrorCode::SchemaViolation, "unknown protocol key: " + key);
        }
    }
    std::vector<std::string> warnings;
    try {
        if (document.at("schema").get<std::string>() != "conceptseg.finetune/1") {
            throw Error(ErrorCode::SchemaViolation, "unsupported protocol schema");
        }
        const auto frozen = component_list(document.at("frozen"), "frozen");
        const auto trainable = component_list(document.at("trainable"), "trainable");
        for (const auto& c : frozen) {
            if (std::find(trainable.begin(), trainable.end(), c) != trainable.end()) {
                throw Error(ErrorCode::SchemaViolation, c + " is both frozen and trainable");
            }
        }
        const auto& constraint = document.at("phrase_constraint");
        const int max_words = constraint.at("max_words").get<int>();
        if (max_words < 1) {
            throw Error(ErrorCode::SchemaViolation, "max_words must be positive");
        }
        for (const auto& p : document.at("prompt_paradigms")) {
            const auto mode = prompt_mode_from_string(p.get<std::string>());
            if (mode == PromptMode::Box) {
                throw Error(ErrorCode::SchemaViolation, "BOX-only training is not a concept paradigm");
            }
        }
        for (const auto& c : trainable) {
            if (c == "tracker" || c == "memory_bank") {
                warnings.push_back("beyond reference protocol: " + c + " is trainable");
            } else if (c == "image_encoder" || c == "text_encoder") {
                warnings.push_back("beyond reference protocol: " + c + " is unfrozen");
            }
        }
        if (max_words != kMaxPhraseWords) {
            warnings.push_back("beyond reference protocol: phrase limit differs from " +
                               std::to_string(kMaxPhraseWords) + " words");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("protocol: ") + e.what());
    }
    return warnings;
}

json emit_finetune_protocol(const json& config) {
    static const std::set<std::string> known{"frozen", "trainable", "base_model", "datasets"};
    if (!config.is_object()) {
        throw Error(ErrorCode::SchemaViolation, "protocol config must be an object");
    }
    for (const auto& [key, _] : config.items()) {
        if (!known.contains(key)) {
            throw Error(ErrorCode::SchemaViolation, "unknown protocol config key: " + key);
        }
    }
    json doc{{"schema", "conceptseg.finetune/1"},
             {"base_model", config.value("base_model", std::string("sam3"))},
             {"frozen", config.value("frozen", std::vector<std::string>{"image_encoder", "text_encoder"})},
             {"trainable", config.value("trainable", std::vector<std::string>{"detector"})},
             {"phrase_constraint", {{"max_words", kMaxPhraseWords}, {"source", "dataset phrase registry"}}},
             {"prompt_paradigms", {"TEXT", "TEXT_BOX"}},
             {"datasets", config.value("datasets", json::array())}};
    doc["warnings"] = validate_finetune_protocol(doc);
    return doc;
}

} // namespace conceptseg

namespace conceptseg {

void write_agent_artifacts(const AgentRunResult& result, const json& config,
                           const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    }
    write_file_atomic(dir / "spec.json", result.spec.to_json().dump(2) + "\n");
    write_file_atomic(dir / "config.json", config.dump(2) + "\n");
    write_file_atomic(dir / "rows.csv", rows_to_csv(result.rows));
    json summary = summaries_to_json(summarize(result.rows), {}, Aggregation::Volume, 8);
    summary["dataset_id"] = result.dataset_id;
    summary["units"] = result.unit_count;
    summary["scored"] = result.rows.size();
    summary["skipped"] = result.skipped.size();
    summary["failed"] = result.failed.size();
    summary["terminations"] = result.terminations;
    write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
    std::ostringstream log;
    for (const auto& f : result.failed) {
        log << "FAILED " << unit_label(f.ref) << " " << to_string(f.code) << " " << f.message << "\n";
    }
    for (const auto& s : result.skipped) {
        log << "SKIPPED " << unit_label(s.ref) << " " << s.reason << "\n";
    }
    write_file_atomic(dir / "failures.log", log.str());
}

} // namespace conceptseg
