#include "conceptseg/datasets.hpp"

#include "conceptseg/codec.hpp"
#include "conceptseg/rng.hpp"

#include <algorithm>
#include <set>

namespace conceptseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Dimension d) { return d == Dimension::D2 ? "d2" : "d3"; }

std::string_view to_string(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
    }
    return "?";
}

Split split_from_string(std::string_view text) {
    if (text == "train") {
        return Split::Train;
    }
    if (text == "test") {
        return Split::Test;
    }
    if (text == "unassigned") {
        return Split::Unassigned;
    }
    throw Error(ErrorCode::SchemaViolation, "unknown split \"" + std::string(text) + "\"");
}

fs::path DatasetManifest::resolve(const fs::path& ref) const {
    return ref.is_absolute() ? ref : base_dir / ref;
}

const TargetSpec* DatasetManifest::find_target(std::string_view target_id) const {
    for (const auto& t : targets) {
        if (t.target_id == target_id) {
            return &t;
        }
    }
    return nullptr;
}

bool ValidationReport::ok() const { return first_failure() == nullptr; }

const ValidationCheck* ValidationReport::first_failure() const {
    for (const auto& c : checks) {
        if (!c.passed) {
            return &c;
        }
    }
    return nullptr;
}

namespace {

const std::set<std::string, std::less<>> kModalities = {
    "x-ray", "us",        "oct", "fundus", "dermoscopy", "histopathology",
    "ir",    "endoscopy", "ct",  "mri",    "nuclear",    "synthetic"};

const std::set<std::string, std::less<>> kTopLevelKeys = {
    "dataset_id", "modality", "dimension", "targets", "cases", "gt_decomposition", "split_seed",
    "notes"};

class CheckBuilder {
  public:
    CheckBuilder(std::string name, ErrorCode code) {
        check_.name = std::move(name);
        check_.code = code;
    }
    void fail(std::string detail) {
        check_.passed = false;
        if (check_.details.size() < 8) {
            check_.details.push_back(std::move(detail));
        }
    }
    ValidationCheck done() { return std::move(check_); }

  private:
    ValidationCheck check_;
};

bool is_string_array(const json& j) {
    return j.is_array() && std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_string(); });
}

void check_schema(const json& j, CheckBuilder& b) {
    if (!j.is_object()) {
        b.fail("manifest must be a JSON object");
        return;
    }
    for (const auto& [key, _] : j.items()) {
        if (!kTopLevelKeys.contains(key)) {
            b.fail("unknown key \"" + key + "\"");
        }
    }
    for (const char* key : {"dataset_id", "modality", "dimension"}) {
        if (!j.contains(key) || !j.at(key).is_string()) {
            b.fail(std::string("\"") + key + "\" must be a string");
        }
    }
    if (j.contains("dimension") && j.at("dimension").is_string() && j.at("dimension") != "d2" &&
        j.at("dimension") != "d3") {
        b.fail("\"dimension\" must be \"d2\" or \"d3\"");
    }
    if (j.contains("gt_decomposition") && !j.at("gt_decomposition").is_string()) {
        b.fail("\"gt_decomposition\" must be a string");
    }
    if (j.contains("split_seed") && !j.at("split_seed").is_number_unsigned()) {
        b.fail("\"split_seed\" must be a non-negative integer");
    }
    if (!j.contains("targets") || !j.at("targets").is_array()) {
        b.fail("\"targets\" must be an array");
    } else {
        for (const auto& t : j.at("targets")) {
            if (!t.is_object() || !t.contains("target_id") || !t.at("target_id").is_string()) {
                b.fail("each target needs a string \"target_id\"");
            } else if (t.contains("phrase") && !t.at("phrase").is_string()) {
                b.fail("target phrase must be a string");
            }
        }
    }
    if (!j.contains("cases") || !j.at("cases").is_array()) {
        b.fail("\"cases\" must be an array");
        return;
    }
    for (const auto& c : j.at("cases")) {
        if (!c.is_object() || !c.contains("case_id") || !c.at("case_id").is_string()) {
            b.fail("each case needs a string \"case_id\"");
            continue;
        }
        const auto id = c.at("case_id").get<std::string>();
        if (c.contains("split") &&
            (!c.at("split").is_string() ||
             (c.at("split") != "train" && c.at("split") != "test" && c.at("split") != "unassigned"))) {
            b.fail(id + ": split must be train, test or unassigned");
        }
        if (!c.contains("images") || !is_string_array(c.at("images"))) {
            b.fail(id + ": \"images\" must be an array of paths");
        }
        if (!c.contains("gt") || !c.at("gt").is_object()) {
            b.fail(id + ": \"gt\" must be an object of target_id -> paths");
        } else {
            for (const auto& [tid, paths] : c.at("gt").items()) {
                if (!is_string_array(paths)) {
                    b.fail(id + ": gt[" + tid + "] must be an array of paths");
                }
            }
        }
    }
}

std::vector<fs::path> to_paths(const json& arr) {
    std::vector<fs::path> out;
    for (const auto& e : arr) {
        out.emplace_back(e.get<std::string>());
    }
    return out;
}

bool strictly_ordered_names(const std::vector<fs::path>& paths) {
    for (std::size_t i = 1; i < paths.size(); ++i) {
        if (!(paths[i - 1].filename().string() < paths[i].filename().string())) {
            return false;
        }
    }
    return true;
}

} // namespace

ValidationReport validate_manifest_json(const json& j, const fs::path& base_dir, FileCheck files,
                                        const PhraseRegistry& registry) {
    ValidationReport report;
    {
        CheckBuilder b("schema", ErrorCode::SchemaViolation);
        check_schema(j, b);
        report.checks.push_back(b.done());
        if (!report.checks.back().passed) {
            return report;
        }
    }

    DatasetManifest m;
    m.dataset_id = j.at("dataset_id").get<std::string>();
    m.modality = j.at("modality").get<std::string>();
    m.dimension = j.at("dimension") == "d3" ? Dimension::D3 : Dimension::D2;
    m.base_dir = base_dir;
    m.gt_decomposition = j.value("gt_decomposition", "");
    if (j.contains("split_seed")) {
        m.split_seed = j.at("split_seed").get<std::uint64_t>();
    }

    {
        CheckBuilder b("dataset_id nonempty", ErrorCode::SchemaViolation);
        if (m.dataset_id.empty()) {
            b.fail("dataset_id is empty");
        }
        report.checks.push_back(b.done());
    }
    {
        CheckBuilder b("modality tag known", ErrorCode::SchemaViolation);
        if (!kModalities.contains(m.modality)) {
            b.fail("unknown modality \"" + m.modality + "\"");
        }
        report.checks.push_back(b.done());
    }
    {
        CheckBuilder unique("target ids unique", ErrorCode::SchemaViolation);
        CheckBuilder phrases("phrases obey the 3-word concept rule", ErrorCode::InvalidPhrase);
        CheckBuilder resolved("phrases resolved from registry", ErrorCode::RegistryMiss);
        std::set<std::string> seen;
        for (const auto& t : j.at("targets")) {
            const auto tid = t.at("target_id").get<std::string>();
            if (!seen.insert(tid).second) {
                unique.fail("duplicate target_id \"" + tid + "\"");
            }
            if (t.contains("phrase")) {
                try {
                    m.targets.push_back({tid, validate_phrase(t.at("phrase").get<std::string>())});
                } catch (const Error& e) {
                    phrases.fail(tid + ": " + e.what());
                }
            } else if (auto p = registry.find(m.dataset_id, tid)) {
                m.targets.push_back({tid, *p});
            } else {
                resolved.fail(tid + ": no phrase given and none registered for " + m.dataset_id);
            }
        }
        if (j.at("targets").empty()) {
            unique.fail("manifest declares no targets");
        }
        report.checks.push_back(unique.done());
        report.checks.push_back(phrases.done());
        report.checks.push_back(resolved.done());
    }

    CheckBuilder dup("case ids unique", ErrorCode::DuplicateCase);
    CheckBuilder declared("cases reference only declared targets", ErrorCode::SchemaViolation);
    CheckBuilder aligned("gt frames aligned with image frames", ErrorCode::AlignmentError);
    CheckBuilder dims("frame count matches dimension", ErrorCode::SchemaViolation);
    CheckBuilder order("frames in lexicographic file-name order", ErrorCode::AlignmentError);
    CheckBuilder exist("referenced files exist", ErrorCode::MissingFile);
    std::set<std::string> case_ids;
    std::set<std::string> target_ids;
    for (const auto& t : j.at("targets")) {
        target_ids.insert(t.at("target_id").get<std::string>());
    }

    for (const auto& c : j.at("cases")) {
        CaseRecord rec;
        rec.case_id = c.at("case_id").get<std::string>();
        rec.split = split_from_string(c.value("split", "unassigned"));
        rec.image_refs = to_paths(c.at("images"));
        if (!case_ids.insert(rec.case_id).second) {
            dup.fail("duplicate case_id \"" + rec.case_id + "\"");
        }
        if (m.dimension == Dimension::D2 && rec.image_refs.size() != 1) {
            dims.fail(rec.case_id + ": d2 cases carry exactly one image, got " +
                      std::to_string(rec.image_refs.size()));
        }
        if (m.dimension == Dimension::D3 && rec.image_refs.empty()) {
            dims.fail(rec.case_id + ": d3 case has no frames");
        }
        if (!strictly_ordered_names(rec.image_refs)) {
            order.fail(rec.case_id + ": image frames out of order");
        }
        for (const auto& [tid, paths] : c.at("gt").items()) {
            if (!target_ids.contains(tid)) {
                declared.fail(rec.case_id + ": undeclared target \"" + tid + "\"");
                continue;
            }
            auto refs = to_paths(paths);
            if (refs.size() != rec.image_refs.size()) {
                aligned.fail(rec.case_id + ": target " + tid + " has " +
                             std::to_string(refs.size()) + " gt frames for " +
                             std::to_string(rec.image_refs.size()) + " images");
            }
            if (!strictly_ordered_names(refs)) {
                order.fail(rec.case_id + ": gt frames for " + tid + " out of order");
            }
            rec.gt_refs[tid] = std::move(refs);
        }
        for (const auto& tid : target_ids) {
            if (!c.at("gt").contains(tid)) {
                aligned.fail(rec.case_id + ": no gt frames for target " + tid);
            }
        }
        if (files == FileCheck::Strict) {
            auto check_file = [&](const fs::path& ref) {
                if (!fs::is_regular_file(m.resolve(ref))) {
                    exist.fail(rec.case_id + ": missing " + ref.string());
                }
            };
            std::for_each(rec.image_refs.begin(), rec.image_refs.end(), check_file);
            for (const auto& [_, refs] : rec.gt_refs) {
                std::for_each(refs.begin(), refs.end(), check_file);
            }
        }
        m.cases.push_back(std::move(rec));
    }
    report.checks.push_back(dup.done());
    report.checks.push_back(declared.done());
    report.checks.push_back(aligned.done());
    report.checks.push_back(dims.done());
    report.checks.push_back(order.done());
    auto exist_check = exist.done();
    if (files == FileCheck::Lazy) {
        exist_check.details.push_back("skipped (lazy file checking)");
    }
    report.checks.push_back(std::move(exist_check));

    if (report.ok()) {
        report.manifest = std::move(m);
    }
    return report;
}

ValidationReport validate_manifest(const fs::path& path, FileCheck files,
                                   const PhraseRegistry& registry) {
    const auto text = read_text_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        ValidationReport report;
        report.checks.push_back({"schema", false, ErrorCode::SchemaViolation,
                                 {std::string("invalid JSON: ") + e.what()}});
        return report;
    }
    auto base = path.parent_path();
    if (base.empty()) {
        base = ".";
    }
    return validate_manifest_json(j, base, files, registry);
}

DatasetManifest load_manifest(const fs::path& path, FileCheck files,
                              const PhraseRegistry& registry) {
    auto report = validate_manifest(path, files, registry);
    if (const auto* failure = report.first_failure()) {
        std::string msg = path.string() + ": " + failure->name;
        if (!failure->details.empty()) {
            msg += ": " + failure->details.front();
        }
        throw Error(failure->code, msg);
    }
    return std::move(*report.manifest);
}

namespace {

std::string relative_ref(const DatasetManifest& m, const fs::path& ref, const fs::path& dest_dir) {
    const auto abs = fs::absolute(m.resolve(ref)).lexically_normal();
    const auto rel = abs.lexically_relative(fs::absolute(dest_dir).lexically_normal());
    return (rel.empty() ? abs : rel).generic_string();
}

} // namespace

json manifest_to_json(const DatasetManifest& m) {
    json j{{"dataset_id", m.dataset_id},
           {"modality", m.modality},
           {"dimension", to_string(m.dimension)},
           {"targets", json::array()},
           {"cases", json::array()}};
    if (!m.gt_decomposition.empty()) {
        j["gt_decomposition"] = m.gt_decomposition;
    }
    if (m.split_seed) {
        j["split_seed"] = *m.split_seed;
    }
    for (const auto& t : m.targets) {
        j["targets"].push_back({{"target_id", t.target_id}, {"phrase", t.phrase.text()}});
    }
    for (const auto& c : m.cases) {
        json cj{{"case_id", c.case_id}, {"split", to_string(c.split)}, {"images", json::array()},
                {"gt", json::object()}};
        for (const auto& p : c.image_refs) {
            cj["images"].push_back(p.generic_string());
        }
        for (const auto& [tid, refs] : c.gt_refs) {
            auto& arr = cj["gt"][tid] = json::array();
            for (const auto& p : refs) {
                arr.push_back(p.generic_string());
            }
        }
        j["cases"].push_back(std::move(cj));
    }
    return j;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
    auto dest_dir = path.parent_path();
    if (dest_dir.empty()) {
        dest_dir = ".";
    }
    DatasetManifest rebased = manifest;
    for (auto& c : rebased.cases) {
        for (auto& p : c.image_refs) {
            p = relative_ref(manifest, p, dest_dir);
        }
        for (auto& [_, refs] : c.gt_refs) {
            for (auto& p : refs) {
                p = relative_ref(manifest, p, dest_dir);
            }
        }
    }
    write_file_atomic(path, manifest_to_json(rebased).dump(2) + "\n");
}

std::size_t train_count(std::size_t n_cases) { return (4 * n_cases + 4) / 5; }

DatasetManifest split_cases(const DatasetManifest& manifest, std::uint64_t seed) {
    for (const auto& c : manifest.cases) {
        if (c.split != Split::Unassigned) {
            throw Error(ErrorCode::SplitAlreadyAssigned,
                        "case " + c.case_id + " already has split " +
                            std::string(to_string(c.split)) + "; official splits are kept");
        }
    }
    struct Keyed {
        std::uint64_t key;
        std::string_view case_id;
        std::size_t index;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(manifest.cases.size());
    const auto seed_mix = mix64(seed);
    for (std::size_t i = 0; i < manifest.cases.size(); ++i) {
        const auto& id = manifest.cases[i].case_id;
        keyed.push_back({mix64(fnv1a64(id) ^ seed_mix), id, i});
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        return a.key != b.key ? a.key < b.key : a.case_id < b.case_id;
    });
    DatasetManifest out = manifest;
    const auto n_train = train_count(keyed.size());
    for (std::size_t rank = 0; rank < keyed.size(); ++rank) {
        out.cases[keyed[rank].index].split = rank < n_train ? Split::Train : Split::Test;
    }
    out.split_seed = seed;
    return out;
}

std::vector<EvalUnitRef> enumerate_eval_units(const DatasetManifest& manifest,
                                              std::optional<Split> split) {
    std::vector<const CaseRecord*> cases;
    for (const auto& c : manifest.cases) {
        if (!split || c.split == *split) {
            cases.push_back(&c);
        }
    }
    std::sort(cases.begin(), cases.end(),
              [](const CaseRecord* a, const CaseRecord* b) { return a->case_id < b->case_id; });

    std::vector<EvalUnitRef> units;
    for (const auto* c : cases) {
        for (const auto& t : manifest.targets) {
            const auto it = c->gt_refs.find(t.target_id);
            if (it == c->gt_refs.end()) {
                throw Error(ErrorCode::AlignmentError,
                            c->case_id + ": no gt frames for target " + t.target_id);
            }
            for (std::size_t f = 0; f < c->image_refs.size(); ++f) {
                units.push_back({c->case_id, t.target_id, static_cast<int>(f),
                                 manifest.resolve(c->image_refs[f]), manifest.resolve(it->second[f])});
            }
        }
    }
    return units;
}

EvalUnit load_eval_unit(const EvalUnitRef& ref) {
    auto image = read_png(ref.image_path);
    auto gt = read_mask_png(ref.gt_path);
    if (gt.width() != image.width() || gt.height() != image.height()) {
        throw Error(ErrorCode::DimensionMismatch, ref.case_id + "/" + ref.target_id + " frame " +
                                                      std::to_string(ref.frame_index) +
                                                      ": mask size differs from image");
    }
    return EvalUnit{ref, std::move(image), std::move(gt)};
}

void iter_eval_units(const DatasetManifest& manifest, std::optional<Split> split,
                     const std::function<void(const EvalUnit&)>& visit) {
    for (const auto& ref : enumerate_eval_units(manifest, split)) {
        visit(load_eval_unit(ref));
    }
}

} // namespace conceptseg
