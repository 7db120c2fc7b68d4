#include "commands.hpp"

#include "conceptseg/codec.hpp"
#include "conceptseg/conformance.hpp"
#include "conceptseg/datasets.hpp"
#include "conceptseg/report.hpp"
#include "conceptseg/runner.hpp"
#include "conceptseg/toy.hpp"

#include <algorithm>
#include <iostream>
#include <set>

namespace conceptseg::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxFailuresShown = 10;

OptionSpec str_opt(std::string name, std::string help, json fallback = "", bool required = false) {
    return {std::move(name), OptionKind::String, std::move(help), std::move(fallback), required};
}

OptionSpec int_opt(std::string name, std::string help, std::int64_t fallback) {
    return {std::move(name), OptionKind::Int, std::move(help), fallback};
}

OptionSpec bool_opt(std::string name, std::string help) {
    return {std::move(name), OptionKind::Bool, std::move(help), false};
}

OptionSpec list_opt(std::string name, std::string help, std::vector<std::string> fallback = {}) {
    return {std::move(name), OptionKind::List, std::move(help), json(std::move(fallback))};
}

OptionSpec positional(OptionSpec o) {
    o.positional = true;
    o.required = true;
    return o;
}

OptionSpec backend_opt() {
    auto o = str_opt("backend", "toy:<world.json>[,<scenes.json>] | remote:<url> | replay:<fixture>", "",
                     true);
    o.env = "CONCEPTSEG_BACKEND_URL";
    o.from_env = [](const std::string& url) { return json("remote:" + url); };
    return o;
}

OptionSpec jobs_opt() {
    auto o = int_opt("jobs", "parallel workers", 1);
    o.env = "CONCEPTSEG_JOBS";
    o.from_env = [](const std::string& v) {
        std::size_t used = 0;
        const long long n = std::stoll(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument("not an integer: " + v);
        }
        return json(n);
    };
    return o;
}

int checked_int(const RunConfig& cfg, const std::string& key, std::int64_t lo, std::int64_t hi) {
    const auto v = cfg.integer(key);
    if (v < lo || v > hi) {
        throw Error(ErrorCode::InvalidArgument,
                    "--" + key + " must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return static_cast<int>(v);
}

std::uint64_t seed_of(const RunConfig& cfg) {
    const auto v = cfg.integer("seed");
    if (v < 0) {
        throw Error(ErrorCode::InvalidArgument, "--seed must be non-negative");
    }
    return static_cast<std::uint64_t>(v);
}

Connectivity connectivity_of(const RunConfig& cfg) {
    const auto v = cfg.integer("connectivity");
    if (v == 4) {
        return Connectivity::Four;
    }
    if (v == 8) {
        return Connectivity::Eight;
    }
    throw Error(ErrorCode::InvalidArgument, "--connectivity must be 4 or 8");
}

std::string short_mode(PromptMode m) {
    switch (m) {
    case PromptMode::Text: return "T";
    case PromptMode::TextBox: return "T+I";
    case PromptMode::Box: return "BOX";
    }
    return "?";
}

void write_config_first(const fs::path& dir, const json& spec, const json& config) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    }
    write_file_atomic(dir / "config.json", config.dump(2) + "\n");
    write_file_atomic(dir / "spec.json", spec.dump(2) + "\n");
}

void report_failures(const std::vector<FailedUnit>& failed, std::ostream& err) {
    for (std::size_t i = 0; i < failed.size() && i < kMaxFailuresShown; ++i) {
        const auto& f = failed[i];
        err << "failed " << f.ref.case_id << "/" << f.ref.target_id << "/" << f.ref.frame_index << ": "
            << f.message << "\n";
    }
    if (failed.size() > kMaxFailuresShown) {
        err << "... " << failed.size() - kMaxFailuresShown << " more in failures.log\n";
    }
}

std::vector<MethodSummary> load_all_summaries(const std::vector<std::string>& paths) {
    std::vector<MethodSummary> out;
    for (const auto& p : paths) {
        auto s = load_summaries(p);
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

void reject_duplicate_summaries(const std::vector<MethodSummary>& all) {
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& s : all) {
        if (!seen.emplace(s.dataset_id, s.method_id).second) {
            throw Error(ErrorCode::InvalidArgument,
                        "duplicate summary for " + s.method_id + " on " + s.dataset_id);
        }
    }
}

// ---------------------------------------------------------------------------

int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream&) {
    const auto report =
        validate_manifest(cfg.str("manifest"), cfg.flag("lazy") ? FileCheck::Lazy : FileCheck::Strict);
    for (const auto& c : report.checks) {
        out << (c.passed ? "PASS " : "FAIL ") << c.name;
        if (!c.passed) {
            out << " [" << to_string(c.code) << "]";
        }
        out << "\n";
        if (!c.passed) {
            for (const auto& d : c.details) {
                out << "    " << d << "\n";
            }
        }
    }
    out << (report.ok() ? "manifest valid\n" : "manifest invalid\n");
    return report.ok() ? kExitOk : kExitFailure;
}

int cmd_split(const RunConfig& cfg, std::ostream& out, std::ostream&) {
    const auto manifest = load_manifest(cfg.str("manifest"));
    const auto split = split_cases(manifest, seed_of(cfg));
    save_manifest(split, cfg.str("out"));
    const auto train = std::count_if(split.cases.begin(), split.cases.end(),
                                     [](const CaseRecord& c) { return c.split == Split::Train; });
    out << "train " << train << " test " << split.cases.size() - static_cast<std::size_t>(train) << " -> "
        << cfg.str("out") << "\n";
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const std::string backend_spec = cfg.str("backend");
    std::shared_ptr<SegmentationBackend> backend = make_backend(backend_spec);
    if (cfg.has("record")) {
        backend = std::make_shared<RecordingBackend>(backend, cfg.str("record"));
    }
    std::vector<PromptMode> modes;
    for (const auto& m : cfg.list("mode")) {
        modes.push_back(prompt_mode_from_string(m));
    }
    if (modes.empty()) {
        throw Error(ErrorCode::InvalidArgument, "at least one --mode is required");
    }
    for (const auto m : modes) {
        require_mode(*backend, m);
    }
    const auto manifest = load_manifest(cfg.str("manifest"));
    const std::string prefix =
        cfg.has("method-id") ? cfg.str("method-id") : backend_spec.substr(0, backend_spec.find(':'));
    const json config = cfg.values;
    const fs::path out_root = cfg.str("out");

    std::vector<RunSpec> specs;
    for (const auto m : modes) {
        RunSpec s;
        s.method_id = prefix + " " + short_mode(m);
        s.prompt_mode = m;
        s.backend = backend_spec;
        s.manifest = cfg.str("manifest");
        s.split = split_from_string(cfg.str("split"));
        s.connectivity = connectivity_of(cfg);
        s.seed = seed_of(cfg);
        s.score_empty_gt = cfg.flag("score-empty-gt");
        s.aggregation = aggregation_from_string(cfg.str("aggregation"));
        s.jobs = checked_int(cfg, "jobs", 1, 256);
        write_config_first(out_root / run_directory_name(s, config), s.to_json(), config);
        specs.push_back(std::move(s));
    }

    std::vector<EvalRow> rows;
    std::set<std::string> subjects;
    std::size_t failures = 0;
    std::vector<std::string> lines;
    for (const auto& s : specs) {
        const auto result = run_eval(s, manifest, *backend);
        const auto dir = write_run_artifacts(result, config, out_root);
        rows.insert(rows.end(), result.rows.begin(), result.rows.end());
        subjects.insert(s.method_id);
        failures += result.failed.size();
        report_failures(result.failed, err);
        lines.push_back(s.method_id + ": scored " + std::to_string(result.rows.size()) + ", skipped " +
                        std::to_string(result.skipped.size()) + ", failed " +
                        std::to_string(result.failed.size()) + " -> " + dir.string());
    }

    const auto aggregation = aggregation_from_string(cfg.str("aggregation"));
    auto summaries = summarize(rows, aggregation);
    if (cfg.has("baselines")) {
        for (const auto& b : load_summaries(cfg.str("baselines"))) {
            if (!subjects.contains(b.method_id)) {
                summaries.push_back(b);
            }
        }
    }
    reject_duplicate_summaries(summaries);
    out << render_delta_table(summaries, subjects);
    for (const auto& l : lines) {
        out << l << "\n";
    }
    return failures > 0 && !cfg.flag("allow-failures") ? kExitFailure : kExitOk;
}

int cmd_agent(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const std::string backend_spec = cfg.str("backend");
    auto backend = make_backend(backend_spec);
    std::shared_ptr<MllmClient> mllm = make_mllm_client(cfg.str("mllm"));
    if (cfg.has("record-mllm")) {
        mllm = std::make_shared<RecordingMllm>(mllm, cfg.str("record-mllm"));
    }
    const auto manifest = load_manifest(cfg.str("manifest"));

    AgentRunSpec spec;
    spec.method_id = cfg.str("method-id");
    spec.mllm = cfg.str("mllm");
    spec.backend = backend_spec;
    spec.manifest = cfg.str("manifest");
    spec.split = split_from_string(cfg.str("split"));
    spec.seed = seed_of(cfg);
    spec.budget = checked_int(cfg, "budget", 1, 100);
    spec.score_empty_gt = cfg.flag("score-empty-gt");
    spec.jobs = checked_int(cfg, "jobs", 1, 256);

    const json config = cfg.values;
    const fs::path dir = fs::path(cfg.str("out")) / agent_run_directory_name(spec, config);
    write_config_first(dir, spec.to_json(), config);
    const auto result = run_agent_eval(spec, manifest, *backend, *mllm, dir / "transcripts");
    write_agent_artifacts(result, config, dir);
    report_failures(result.failed, err);

    const auto summaries = summarize(result.rows);
    out << render_delta_table(summaries, {});
    out << "terminations:";
    for (const auto& [name, n] : result.terminations) {
        out << " " << name << "=" << n;
    }
    out << "\n"
        << spec.method_id << ": scored " << result.rows.size() << ", skipped " << result.skipped.size()
        << ", failed " << result.failed.size() << " -> " << dir.string() << "\n";
    return !result.failed.empty() && !cfg.flag("allow-failures") ? kExitFailure : kExitOk;
}

int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream&) {
    const auto aggregation = aggregation_from_string(cfg.str("aggregation"));
    std::vector<EvalRow> rows;
    for (const auto& p : cfg.list("rows")) {
        auto r = read_rows_csv(p);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    std::vector<std::string> order;  // methods by first appearance
    auto note = [&](const std::string& m) {
        if (std::find(order.begin(), order.end(), m) == order.end()) {
            order.push_back(m);
        }
    };
    for (const auto& r : rows) {
        note(r.method_id);
    }
    auto summaries = summarize(rows, aggregation);
    for (const auto& s : load_all_summaries(cfg.list("summaries"))) {
        note(s.method_id);
        summaries.push_back(s);
    }
    std::set<std::string> baseline_methods;
    for (const auto& s : load_all_summaries(cfg.list("baselines"))) {
        baseline_methods.insert(s.method_id);
        summaries.push_back(s);
    }
    reject_duplicate_summaries(summaries);
    if (summaries.empty()) {
        throw Error(ErrorCode::InvalidArgument, "nothing to report: give --rows or --summaries");
    }

    std::set<std::string> subjects;
    const auto explicit_subjects = cfg.list("subject");
    if (!explicit_subjects.empty()) {
        subjects.insert(explicit_subjects.begin(), explicit_subjects.end());
    } else if (!baseline_methods.empty()) {
        for (const auto& m : order) {
            if (!baseline_methods.contains(m)) {
                subjects.insert(m);
            }
        }
    } else if (order.size() > 1) {
        subjects.insert(order.back());
    }

    const int connectivity = static_cast<int>(connectivity_of(cfg));
    const std::string table = render_delta_table(summaries, subjects);
    out << table;

    std::vector<CaseDelta> series;
    std::string series_label;
    if (cfg.has("series")) {
        const std::string spec = cfg.str("series");
        const auto colon = spec.find(':');
        if (colon == std::string::npos) {
            throw Error(ErrorCode::InvalidArgument, "--series expects METHOD_A:METHOD_B");
        }
        const std::string a = spec.substr(0, colon);
        const std::string b = spec.substr(colon + 1);
        std::vector<EvalRow> rows_a;
        std::vector<EvalRow> rows_b;
        for (const auto& r : rows) {
            if (r.method_id == a) {
                rows_a.push_back(r);
            } else if (r.method_id == b) {
                rows_b.push_back(r);
            }
        }
        series = per_case_series(rows_a, rows_b, aggregation);
        series_label = a + " vs " + b;
        out << "series " << series_label << ": " << series.size() << " cases\n";
    }

    if (cfg.has("out")) {
        const fs::path dir = cfg.str("out");
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) {
            throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
        }
        write_file_atomic(dir / "summary.json",
                          summaries_to_json(summaries, subjects, aggregation, connectivity).dump(2) + "\n");
        write_file_atomic(dir / "summary.csv", summaries_to_csv(summaries));
        write_file_atomic(dir / "deltas.txt", table + "\n" + conventions_text(aggregation, connectivity));
        write_file_atomic(dir / "radar.json", radar_series(summaries).dump(2) + "\n");
        if (!series_label.empty()) {
            write_file_atomic(dir / "series.csv", series_to_csv(series));
        }
        out << "wrote " << dir.string() << "\n";
    }
    return kExitOk;
}

int cmd_toy_gen(const RunConfig& cfg, std::ostream& out, std::ostream&) {
    ToySuiteSpec spec;
    spec.dataset_id = cfg.str("dataset-id");
    spec.cases = checked_int(cfg, "cases", 1, 100000);
    spec.seed = seed_of(cfg);
    spec.all_test = !cfg.flag("unassigned");
    spec.targets = cfg.list("targets");
    spec.scene.width = checked_int(cfg, "width", 8, 4096);
    spec.scene.height = checked_int(cfg, "height", 8, 4096);
    spec.scene.object_count = checked_int(cfg, "objects", 1, 64);
    spec.scene.lexicon = cfg.list("lexicon");
    spec.scene.shapes.clear();
    for (const auto& s : cfg.list("shapes")) {
        spec.scene.shapes.push_back(shape_kind_from_string(s));
    }
    spec.scene.min_size = checked_int(cfg, "min-size", 1, 1024);
    spec.scene.max_size = checked_int(cfg, "max-size", 1, 1024);
    spec.scene.noise = checked_int(cfg, "noise", 0, 64);

    const fs::path dir = cfg.str("out");
    const auto suite = write_toy_suite(spec, dir);
    out << "wrote " << suite.manifest.cases.size() << " cases\n"
        << "manifest " << suite.manifest_path.string() << "\n"
        << "scenes " << suite.scene_index_path.string() << "\n";
    for (const auto preset : kToyWorldPresets) {
        const auto world = dir / ("world-" + std::string(preset) + ".json");
        if (fs::exists(world)) {
            out << "world " << world.string() << "\n";
        }
    }
    return kExitOk;
}

int cmd_conformance(const RunConfig& cfg, std::ostream& out, std::ostream&) {
    const auto fixture =
        cfg.has("fixture") ? ReferenceFixture::load(cfg.str("fixture")) : ReferenceFixture::builtin();
    const auto checks = check_arrow_consistency(fixture);
    out << format_arrow_report(checks);
    const auto unexpected = unexpected_discrepancies(checks);

    const auto injected = cfg.list("inject");
    const auto phrases = cfg.has("registry")
                             ? check_phrase_fixture(json::parse(read_text_file(cfg.str("registry"))), injected)
                             : check_phrase_fixture(injected);
    std::size_t phrase_failures = 0;
    for (const auto& p : phrases) {
        if (!p.passed) {
            ++phrase_failures;
            out << "FAIL phrase " << p.dataset_id << "/" << p.target_id << " \"" << p.phrase
                << "\": " << p.message << "\n";
        }
    }
    out << "arrows checked " << checks.size() << ", unexpected " << unexpected.size() << "; phrases checked "
        << phrases.size() << ", failing " << phrase_failures << "\n";
    return unexpected.empty() && phrase_failures == 0 ? kExitOk : kExitFailure;
}

int cmd_finetune(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    if (cfg.has("validate")) {
        const auto doc = json::parse(read_text_file(cfg.str("validate")));
        for (const auto& w : validate_finetune_protocol(doc)) {
            out << "warning: " << w << "\n";
        }
        out << "descriptor valid\n";
        return kExitOk;
    }
    const json input = cfg.has("input") ? json::parse(read_text_file(cfg.str("input"))) : json::object();
    const json doc = emit_finetune_protocol(input);
    for (const auto& w : validate_finetune_protocol(doc)) {
        err << "warning: " << w << "\n";
    }
    if (cfg.has("out")) {
        write_file_atomic(cfg.str("out"), doc.dump(2) + "\n");
    } else {
        out << doc.dump(2) << "\n";
    }
    return kExitOk;
}

std::vector<Command> build_commands() {
    std::vector<Command> cmds;
    cmds.push_back({"validate",
                    "check a dataset manifest and print every invariant",
                    {positional(str_opt("manifest", "manifest.json")),
                     bool_opt("lazy", "skip file existence checks")},
                    false,
                    cmd_validate});
    cmds.push_back({"split",
                    "assign a seeded 4:1 train/test split",
                    {positional(str_opt("manifest", "manifest.json")), int_opt("seed", "split seed", 0),
                     str_opt("out", "output manifest", "", true)},
                    false,
                    cmd_split});
    cmds.push_back({"eval",
                    "run one evaluation per prompt mode and print the summary table",
                    {str_opt("manifest", "manifest.json", "", true), backend_opt(),
                     list_opt("mode", "TEXT, TEXT_BOX or BOX (repeatable)", {"TEXT"}),
                     str_opt("method-id", "method id prefix (default: backend kind)"),
                     str_opt("split", "train or test", "test"),
                     int_opt("seed", "split seed for unsplit manifests", 0),
                     int_opt("connectivity", "4 or 8", 8),
                     str_opt("aggregation", "volume or slice-mean", "volume"),
                     bool_opt("score-empty-gt", "score frames whose ground truth is empty"),
                     str_opt("baselines", "summaries JSON of reference methods"), jobs_opt(),
                     str_opt("out", "run directory root", "runs"),
                     bool_opt("allow-failures", "exit 0 even when units failed"),
                     str_opt("record", "append backend exchanges to this fixture")},
                    true,
                    cmd_eval});
    auto mllm = str_opt("mllm",
                        "mock:accept-iff-improved | mock:accept-after:N | mock:script:<file> | "
                        "live:<url> | replay:<file>",
                        "mock:accept-iff-improved");
    mllm.env = "CONCEPTSEG_MLLM_URL";
    mllm.from_env = [](const std::string& url) { return json("live:" + url); };
    cmds.push_back({"agent",
                    "run the refinement agent over a split and score it afterwards",
                    {str_opt("manifest", "manifest.json", "", true), backend_opt(), mllm,
                     int_opt("budget", "rounds per session", kDefaultAgentBudget),
                     str_opt("method-id", "method id", "agent"), str_opt("split", "train or test", "test"),
                     int_opt("seed", "split seed for unsplit manifests", 0),
                     bool_opt("score-empty-gt", "run sessions on empty ground truth too"), jobs_opt(),
                     str_opt("out", "run directory root", "runs"),
                     bool_opt("allow-failures", "exit 0 even when units failed"),
                     str_opt("record-mllm", "append MLLM exchanges to this file")},
                    true,
                    cmd_agent});
    cmds.push_back({"report",
                    "merge rows and summaries into tables and figure data",
                    {list_opt("rows", "rows.csv (repeatable)"), list_opt("summaries", "summary JSON (repeatable)"),
                     list_opt("baselines", "reference summaries (repeatable)"),
                     list_opt("subject", "methods that get arrows (repeatable)"),
                     str_opt("series", "per-case series METHOD_A:METHOD_B"),
                     str_opt("aggregation", "volume or slice-mean", "volume"),
                     int_opt("connectivity", "recorded convention, 4 or 8", 8),
                     str_opt("out", "output directory")},
                    true,
                    cmd_report});
    cmds.push_back({"toy-gen",
                    "write a synthetic demo suite with world presets",
                    {str_opt("out", "output directory", "", true), int_opt("cases", "number of cases", 50),
                     int_opt("seed", "generation seed", 0), int_opt("width", "image width", 48),
                     int_opt("height", "image height", 48), int_opt("objects", "objects per scene", 2),
                     list_opt("shapes", "disk, rectangle, ring", {"disk", "rectangle"}),
                     list_opt("lexicon", "object labels", {"tumor", "cyst"}),
                     list_opt("targets", "labels that become targets", {"tumor"}),
                     int_opt("min-size", "smallest radius", 4), int_opt("max-size", "largest radius", 8),
                     int_opt("noise", "pixel noise amplitude", 4),
                     str_opt("dataset-id", "dataset id", "toy-suite"),
                     bool_opt("unassigned", "leave cases without a split")},
                    true,
                    cmd_toy_gen});
    cmds.push_back({"conformance",
                    "recheck reference arrows and registry phrases",
                    {str_opt("fixture", "reference table fixture (default: built in)"),
                     str_opt("registry", "phrase registry document (default: built in)"),
                     list_opt("inject", "extra phrases to check (repeatable)")},
                    false,
                    cmd_conformance});
    cmds.push_back({"finetune-protocol",
                    "emit or validate a fine-tuning descriptor",
                    {str_opt("input", "descriptor settings JSON"), str_opt("out", "output file"),
                     str_opt("validate", "descriptor to validate")},
                    false,
                    cmd_finetune});
    return cmds;
}

} // namespace

const std::vector<Command>& commands() {
    static const std::vector<Command> cmds = build_commands();
    return cmds;
}

std::shared_ptr<SegmentationBackend> make_backend(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (rest.empty()) {
        throw Error(ErrorCode::InvalidArgument, "backend must look like kind:argument, got \"" + spec + "\"");
    }
    if (kind == "toy") {
        const auto comma = rest.find(',');
        const fs::path world = rest.substr(0, comma);
        const fs::path scenes =
            comma == std::string::npos ? world.parent_path() / "scenes.json" : fs::path(rest.substr(comma + 1));
        return std::make_shared<ToyBackend>(ToyWorldConfig::from_json(json::parse(read_text_file(world))),
                                            scenes);
    }
    if (kind == "remote") {
        return std::make_shared<RemoteBackend>(rest);
    }
    if (kind == "replay") {
        return std::make_shared<ReplayBackend>(fs::path(rest), "replay:" + rest);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown backend kind \"" + kind + "\"");
}

} // namespace conceptseg::cli
