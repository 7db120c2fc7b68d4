#include "conceptseg/codec.hpp"
#include "conceptseg/runner.hpp"
#include "conceptseg/toy.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <set>

using namespace conceptseg;
using nlohmann::json;

namespace {

ToySuite make_suite(const std::filesystem::path& dir, int cases, std::uint64_t seed = 0) {
    ToySuiteSpec spec;
    spec.cases = cases;
    spec.seed = seed;
    spec.scene.width = 40;
    spec.scene.height = 32;
    spec.scene.object_count = 2;
    spec.scene.shapes = {ShapeKind::Disk, ShapeKind::Rectangle};
    spec.scene.lexicon = {"tumor", "cyst"};
    spec.scene.min_size = 3;
    spec.scene.max_size = 6;
    spec.targets = {"tumor"};
    return write_toy_suite(spec, dir);
}

ToyWorldConfig preset(const std::string& name) {
    return toy_world_preset(name, {"tumor", "cyst"}, {"tumor"});
}

double mean_of(const RunResult& r) {
    const auto s = summarize(r.rows, r.spec.aggregation);
    REQUIRE(s.size() == 1);
    return s[0].mean_dice;
}

RunSpec spec_for(PromptMode mode, const std::string& method = "toy") {
    RunSpec s;
    s.method_id = method;
    s.prompt_mode = mode;
    s.backend = "toy";
    return s;
}

// Fails every call whose image digest is in `bad`.
class SelectiveFailure : public SegmentationBackend {
  public:
    SelectiveFailure(SegmentationBackend& inner, std::set<std::string> bad)
        : inner_(inner), bad_(std::move(bad)) {}
    SegmentationResult segment(const RasterImage& image, const PromptBundle& prompt) override {
        if (bad_.contains(image_digest(image))) {
            throw Error(ErrorCode::Timeout, "simulated timeout");
        }
        return inner_.segment(image, prompt);
    }
    std::string id() const override { return inner_.id(); }
    bool supports(PromptMode m) const override { return inner_.supports(m); }

  private:
    SegmentationBackend& inner_;
    std::set<std::string> bad_;
};

} // namespace

TEST_SUITE("runner") {

TEST_CASE("toy suite reproduces the text-to-box recovery pattern") {
    testutil::TempDir dir("runner");
    const auto suite = make_suite(dir.path(), 20);
    ToyBackend full(preset("full-vocab"), suite.scene_index_path);
    ToyBackend empty(preset("empty-vocab"), suite.scene_index_path);

    const auto t_full = run_eval(spec_for(PromptMode::Text), suite.manifest, full);
    const auto t_empty = run_eval(spec_for(PromptMode::Text), suite.manifest, empty);
    const auto tb_empty = run_eval(spec_for(PromptMode::TextBox), suite.manifest, empty);
    CHECK(mean_of(t_full) == 1.0);
    CHECK(mean_of(t_empty) == 0.0);
    CHECK(mean_of(tb_empty) >= 0.95);
    for (const auto* r : {&t_full, &t_empty, &tb_empty}) {
        CHECK(r->covers_all_units());
        CHECK(r->unit_count == 20);
        CHECK(r->failed.empty());
    }
}

TEST_CASE("misgrounding defeats single-shot text and text-box") {
    testutil::TempDir dir("runner");
    const auto suite = make_suite(dir.path(), 8);
    ToyBackend mis(preset("misground"), suite.scene_index_path);
    CHECK(mean_of(run_eval(spec_for(PromptMode::Text), suite.manifest, mis)) == 0.0);
    CHECK(mean_of(run_eval(spec_for(PromptMode::TextBox), suite.manifest, mis)) == 0.0);
    CHECK(mean_of(run_eval(spec_for(PromptMode::Box), suite.manifest, mis)) >= 0.95);
}

TEST_CASE("failed units are recorded and the run continues") {
    testutil::TempDir dir("runner");
    const auto suite = make_suite(dir.path(), 6);
    ToyBackend full(preset("full-vocab"), suite.scene_index_path);
    SelectiveFailure flaky(full, {image_digest(suite.scenes[1].image), image_digest(suite.scenes[4].image)});
    const auto r = run_eval(spec_for(PromptMode::Text), suite.manifest, flaky);
    CHECK(r.failed.size() == 2);
    CHECK(r.rows.size() == 4);
    CHECK(r.covers_all_units());
    CHECK(r.failed[0].code == ErrorCode::Timeout);
    CHECK(mean_of(r) == 1.0);
}

TEST_CASE("unsupported modes fail before any call") {
    testutil::TempDir dir("runner");
    const auto suite = make_suite(dir.path(), 2);
    auto w = preset("full-vocab");
    w.modes = {PromptMode::Text};
    ToyBackend text_only(w, suite.scene_index_path);
    try {
        run_eval(spec_for(PromptMode::Box), suite.manifest, text_only);
        FAIL("ran");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnsupportedMode);
    }
}

TEST_CASE("results do not depend on the worker count") {
    testutil::TempDir dir("runner");
    const auto suite = make_suite(dir.path(), 12);
    auto w = preset("empty-vocab");
    w.corruption = {1, 0, 1};
    ToyBackend backend(w, suite.scene_index_path);
    auto spec = spec_for(PromptMode::TextBox);
    const auto serial = run_eval(spec, suite.manifest, backend);
    spec.jobs = 4;
    const auto parallel = run_eval(spec, suite.manifest, backend);
    REQUIRE(serial.rows.size() == parallel.rows.size());
    for (std::size_t i = 0; i < serial.rows.size(); ++i) {
        CHECK(serial.rows[i].case_id == parallel.rows[i].case_id);
        CHECK(serial.rows[i].dice == parallel.rows[i].dice);
    }
}

TEST_CASE("unsplit manifests are split with the run seed") {
    testutil::TempDir dir("runner");
    ToySuiteSpec ts;
    ts.cases = 10;
    ts.all_test = false;
    ts.scene.lexicon = {"tumor"};
    const auto suite = write_toy_suite(ts, dir.path());
    ToyBackend full(toy_world_preset("full-vocab", {"tumor"}, {"tumor"}), suite.scene_index_path);
    auto spec = spec_for(PromptMode::Text);
    spec.seed = 5;
    const auto test = run_eval(spec, suite.manifest, full);
    spec.split = Split::Train;
    const auto train = run_eval(spec, suite.manifest, full);
    CHECK(train.unit_count == train_count(10));
    CHECK(test.unit_count + train.unit_count == 10);
}

TEST_CASE("empty ground truth handling") {
    testutil::TempDir dir("runner");
    const auto suite = make_suite(dir.path(), 3);
    auto manifest = suite.manifest;
    // Blank one case's mask.
    write_mask_png(manifest.resolve(manifest.cases[0].gt_refs.at("tumor")[0]), BinaryMask(40, 32));
    ToyBackend empty(preset("empty-vocab"), suite.scene_index_path);
    const auto skipped = run_eval(spec_for(PromptMode::Text), manifest, empty);
    CHECK(skipped.skipped.size() == 1);
    CHECK(skipped.rows.size() == 2);
    auto spec = spec_for(PromptMode::Text);
    spec.score_empty_gt = true;
    const auto scored = run_eval(spec, manifest, empty);
    CHECK(scored.rows.size() == 3);
    CHECK(scored.rows[0].dice == 1.0);  // both empty
    spec.prompt_mode = PromptMode::Box;
    CHECK(run_eval(spec, manifest, empty).skipped.size() == 1);
    CHECK_THROWS_AS(build_prompt(PromptMode::Box, validate_phrase("tumor"), BinaryMask(4, 4), Connectivity::Eight),
                    Error);
}

TEST_CASE("3d runs score every frame as one volume") {
    testutil::TempDir dir("runner3d");
    SceneSpec with_tumor;
    with_tumor.width = 32;
    with_tumor.height = 32;
    with_tumor.lexicon = {"tumor"};
    SceneSpec without = with_tumor;
    without.lexicon = {"cyst"};
    std::vector<SyntheticScene> frames{generate_scene(with_tumor, 1), generate_scene(without, 2),
                                       generate_scene(with_tumor, 3)};
    std::filesystem::create_directories(dir / "v");
    json images = json::array();
    json gts = json::array();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto name = "v/f" + std::to_string(i);
        write_png(dir / (name + ".png"), frames[i].image);
        const auto* obj = frames[i].find(validate_phrase("tumor"));
        write_mask_png(dir / (name + "_gt.png"), obj ? obj->mask : BinaryMask(32, 32));
        images.push_back(name + ".png");
        gts.push_back(name + "_gt.png");
    }
    const json m{{"dataset_id", "toy-3d"},
                 {"modality", "synthetic"},
                 {"dimension", "d3"},
                 {"targets", {{{"target_id", "tumor"}, {"phrase", "tumor"}}}},
                 {"cases", {{{"case_id", "vol"}, {"images", images}, {"gt", {{"tumor", gts}}}, {"split", "test"}}}}};
    write_file_atomic(dir / "manifest.json", m.dump());
    ToyWorldConfig w;
    w.vocabulary = {"tumor", "cyst"};
    ToyBackend backend(w, frames);

    auto spec = spec_for(PromptMode::Text);
    spec.manifest = dir / "manifest.json";
    const auto text = run_eval(spec, backend);
    CHECK(text.rows.size() == 3);
    CHECK(mean_of(text) == 1.0);
    for (const auto& r : text.rows) {
        CHECK(r.counts.has_value());
    }
    spec.prompt_mode = PromptMode::TextBox;
    const auto tb = run_eval(spec, backend);
    CHECK(tb.rows.size() == 2);
    CHECK(tb.skipped.size() == 1);
}

TEST_CASE("run spec json and artifacts") {
    auto spec = spec_for(PromptMode::TextBox, "SAM 3 T+I");
    spec.seed = 3;
    spec.aggregation = Aggregation::SliceMean;
    const auto back = RunSpec::from_json(spec.to_json());
    CHECK(back.to_json() == spec.to_json());
    auto extra = spec.to_json();
    extra["surprise"] = true;
    CHECK_THROWS_AS(RunSpec::from_json(extra), Error);

    testutil::TempDir dir("artifacts");
    const auto suite = make_suite(dir / "suite", 4);
    ToyBackend full(preset("full-vocab"), suite.scene_index_path);
    auto run_spec = spec_for(PromptMode::Text, "SAM 3 T+I");
    const auto result = run_eval(run_spec, suite.manifest, full);
    const json config{{"jobs", 1}};
    const auto out = write_run_artifacts(result, config, dir / "runs");
    for (const char* f : {"spec.json", "config.json", "rows.csv", "summary.json", "failures.log", "conformance.txt"}) {
        CHECK_MESSAGE(std::filesystem::exists(out / f), f);
    }
    CHECK(out.filename().string().starts_with("sam_3_tpi-"));
    CHECK(out == write_run_artifacts(result, config, dir / "runs"));
    CHECK(run_directory_name(run_spec, config) != run_directory_name(run_spec, json{{"jobs", 2}}));
    const auto summary = json::parse(read_text_file(out / "summary.json"));
    CHECK(summary.at("units") == 4);
    CHECK(summary.at("summaries")[0].at("mean_dice") == 1.0);
    CHECK(read_rows_csv(out / "rows.csv").size() == 4);
}

TEST_CASE("agent evaluation on a misgrounding suite") {
    testutil::TempDir dir("agent-eval");
    const auto suite = make_suite(dir / "suite", 8);
    ToyBackend mis(preset("misground"), suite.scene_index_path);
    AcceptIfImprovedMllm mllm;
    AgentRunSpec spec;
    spec.mllm = mllm.id();
    spec.backend = "toy";
    spec.jobs = 3;
    const auto r = run_agent_eval(spec, suite.manifest, mis, mllm, dir / "transcripts");
    CHECK(r.covers_all_units());
    CHECK(r.rows.size() == 8);
    const auto agent = summarize(r.rows);
    const auto text = summarize(run_eval(spec_for(PromptMode::Text), suite.manifest, mis).rows);
    CHECK(agent[0].mean_dice >= text[0].mean_dice);
    CHECK(agent[0].mean_dice == 1.0);
    CHECK(r.terminations.at("ACCEPTED") == 8);
    std::size_t saved = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir / "transcripts")) {
        saved += e.path().extension() == ".json" ? 1 : 0;
    }
    CHECK(saved == 8);
    for (const auto& row : r.rows) {
        CHECK(row.prompt_mode == "AGENT");
    }
}

TEST_CASE("fine-tune protocol descriptor") {
    const auto doc = emit_finetune_protocol();
    CHECK(doc.at("frozen") == json::array({"image_encoder", "text_encoder"}));
    CHECK(doc.at("trainable") == json::array({"detector"}));
    CHECK(doc.at("phrase_constraint").at("max_words") == 3);
    CHECK(validate_finetune_protocol(doc).empty());

    const auto tracker = emit_finetune_protocol({{"trainable", {"detector", "tracker"}}});
    const auto warnings = validate_finetune_protocol(tracker);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("tracker") != std::string::npos);

    CHECK_THROWS_AS(emit_finetune_protocol({{"trainable", {"decoder"}}}), Error);
    CHECK_THROWS_AS(emit_finetune_protocol({{"frozen", {"detector"}}, {"trainable", {"detector"}}}), Error);
    CHECK_THROWS_AS(emit_finetune_protocol({{"learning_rate", 1e-4}}), Error);
    auto box_doc = doc;
    box_doc["prompt_paradigms"] = {"TEXT", "BOX"};
    CHECK_THROWS_AS(validate_finetune_protocol(box_doc), Error);
}

} // TEST_SUITE
