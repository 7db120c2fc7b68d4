#include "conceptseg/toy.hpp"

#include "conceptseg/codec.hpp"
#include "conceptseg/rng.hpp"

#include <algorithm>

namespace conceptseg {

using nlohmann::json;

std::string_view to_string(ShapeKind kind) {
    switch (kind) {
    case ShapeKind::Disk: return "disk";
    case ShapeKind::Rectangle: return "rectangle";
    case ShapeKind::Ring: return "ring";
    }
    return "?";
}

ShapeKind shape_kind_from_string(std::string_view text) {
    if (text == "disk") {
        return ShapeKind::Disk;
    }
    if (text == "rectangle") {
        return ShapeKind::Rectangle;
    }
    if (text == "ring") {
        return ShapeKind::Ring;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown shape kind \"" + std::string(text) + "\"");
}

const SceneObject* SyntheticScene::find(const ConceptPhrase& label) const {
    for (const auto& o : objects) {
        if (o.label == label) {
            return &o;
        }
    }
    return nullptr;
}

std::uint8_t toy_label_intensity(const ConceptPhrase& label) {
    return static_cast<std::uint8_t>(48 + (fnv1a64(label.text()) % 13) * 16);
}

BinaryMask rasterize_disk(int width, int height, int cx, int cy, int radius) {
    BinaryMask m(width, height);
    const long r2 = static_cast<long>(radius) * radius;
    for (int y = std::max(0, cy - radius); y <= std::min(height - 1, cy + radius); ++y) {
        for (int x = std::max(0, cx - radius); x <= std::min(width - 1, cx + radius); ++x) {
            const long dx = x - cx;
            const long dy = y - cy;
            if (dx * dx + dy * dy <= r2) {
                m.set(x, y);
            }
        }
    }
    return m;
}

BinaryMask rasterize_rectangle(int width, int height, int cx, int cy, int half_w, int half_h) {
    BinaryMask m(width, height);
    for (int y = std::max(0, cy - half_h); y <= std::min(height - 1, cy + half_h); ++y) {
        for (int x = std::max(0, cx - half_w); x <= std::min(width - 1, cx + half_w); ++x) {
            m.set(x, y);
        }
    }
    return m;
}

BinaryMask rasterize_ring(int width, int height, int cx, int cy, int radius) {
    BinaryMask m(width, height);
    const long r2 = static_cast<long>(radius) * radius;
    const long inner = std::max(1, radius / 2);
    const long inner2 = inner * inner;
    for (int y = std::max(0, cy - radius); y <= std::min(height - 1, cy + radius); ++y) {
        for (int x = std::max(0, cx - radius); x <= std::min(width - 1, cx + radius); ++x) {
            const long dx = x - cx;
            const long dy = y - cy;
            const long d2 = dx * dx + dy * dy;
            if (d2 <= r2 && d2 > inner2) {
                m.set(x, y);
            }
        }
    }
    return m;
}

SyntheticScene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    if (spec.object_count < 0 || spec.min_size < 1 || spec.max_size < spec.min_size ||
        (spec.object_count > 0 && spec.shapes.empty())) {
        throw Error(ErrorCode::InvalidArgument, "invalid scene spec");
    }
    DeterministicRng rng(seed);
    std::vector<SceneObject> objects;
    BinaryMask occupied(spec.width, spec.height);  // objects grown by one pixel

    for (int i = 0; i < spec.object_count; ++i) {
        const auto kind = spec.shapes[static_cast<std::size_t>(i) % spec.shapes.size()];
        const std::string label_text =
            spec.lexicon.empty() ? std::string(to_string(kind))
                                 : spec.lexicon[static_cast<std::size_t>(i) % spec.lexicon.size()];
        auto label = validate_phrase(label_text);

        bool placed = false;
        for (int attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
            const int size = static_cast<int>(rng.uniform_int(spec.min_size, spec.max_size));
            const int size_y = kind == ShapeKind::Rectangle
                                   ? static_cast<int>(rng.uniform_int(spec.min_size, spec.max_size))
                                   : size;
            if (2 * size + 1 > spec.width || 2 * size_y + 1 > spec.height) {
                continue;
            }
            const int cx = static_cast<int>(rng.uniform_int(size, spec.width - 1 - size));
            const int cy = static_cast<int>(rng.uniform_int(size_y, spec.height - 1 - size_y));
            BinaryMask mask = kind == ShapeKind::Disk
                                  ? rasterize_disk(spec.width, spec.height, cx, cy, size)
                              : kind == ShapeKind::Rectangle
                                  ? rasterize_rectangle(spec.width, spec.height, cx, cy, size, size_y)
                                  : rasterize_ring(spec.width, spec.height, cx, cy, size);
            bool clash = false;
            for (std::size_t p = 0; p < mask.size() && !clash; ++p) {
                clash = mask.test(p) && occupied.test(p);
            }
            if (clash) {
                continue;
            }
            const auto grown = dilate(mask, 1);
            for (std::size_t p = 0; p < grown.size(); ++p) {
                if (grown.test(p)) {
                    occupied.set(p);
                }
            }
            objects.push_back({std::move(label), kind, std::move(mask)});
            placed = true;
        }
        if (!placed) {
            throw Error(ErrorCode::InfeasiblePacking,
                        "could not place object " + std::to_string(i) + " after " +
                            std::to_string(spec.max_attempts) + " attempts");
        }
    }

    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(spec.width) * spec.height);
    for (std::size_t p = 0; p < pixels.size(); ++p) {
        int level = kToyBackgroundLevel;
        for (const auto& o : objects) {
            if (o.mask.test(p)) {
                level = toy_label_intensity(o.label);
                break;
            }
        }
        if (spec.noise > 0) {
            level += static_cast<int>(rng.uniform_int(-spec.noise, spec.noise));
        }
        pixels[p] = static_cast<std::uint8_t>(std::clamp(level, 0, 255));
    }
    return {RasterImage(spec.width, spec.height, 1, std::move(pixels)), std::move(objects), seed};
}

namespace {

// Separable square-window min/max filter.
BinaryMask morph(const BinaryMask& mask, int px, bool grow) {
    if (px <= 0) {
        return mask;
    }
    const int w = mask.width();
    const int h = mask.height();
    BinaryMask horizontal(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool v = !grow;
            for (int k = x - px; k <= x + px; ++k) {
                const bool inside = k >= 0 && k < w;
                const bool bit = inside && mask.test(k, y);
                if (grow ? bit : !bit) {
                    v = grow;
                    break;
                }
            }
            horizontal.set(x, y, v);
        }
    }
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool v = !grow;
            for (int k = y - px; k <= y + px; ++k) {
                const bool inside = k >= 0 && k < h;
                const bool bit = inside && horizontal.test(x, k);
                if (grow ? bit : !bit) {
                    v = grow;
                    break;
                }
            }
            out.set(x, y, v);
        }
    }
    return out;
}

double box_iou(const BinaryMask& mask, const BoxPrompt& box) {
    std::size_t inter = 0;
    std::size_t area = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.test(x, y)) {
                ++area;
                inter += box.contains(x, y) ? 1 : 0;
            }
        }
    }
    const auto uni = area + box.area() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

const SceneObject* find_object(std::span<const SceneObject> objects, const ConceptPhrase& label) {
    for (const auto& o : objects) {
        if (o.label == label) {
            return &o;
        }
    }
    return nullptr;
}

} // namespace

BinaryMask dilate(const BinaryMask& mask, int px) { return morph(mask, px, true); }

BinaryMask erode(const BinaryMask& mask, int px) { return morph(mask, px, false); }

BinaryMask shift(const BinaryMask& mask, int dx, int dy) {
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            const int nx = x + dx;
            const int ny = y + dy;
            if (mask.test(x, y) && nx >= 0 && ny >= 0 && nx < mask.width() && ny < mask.height()) {
                out.set(nx, ny);
            }
        }
    }
    return out;
}

json ToyWorldConfig::to_json() const {
    json mis = json::object();
    for (const auto& [from, m] : misground_map) {
        mis[from] = {{"to", m.to}, {"shadows_vocabulary", m.shadows_vocabulary}};
    }
    json mode_list = json::array();
    for (auto m : modes) {
        mode_list.push_back(conceptseg::to_string(m));
    }
    return {{"vocabulary", vocabulary},
            {"misground_map", mis},
            {"corruption",
             {{"dilate_px", corruption.dilate_px},
              {"erode_px", corruption.erode_px},
              {"shift_px", corruption.shift_px}}},
            {"box_rescue", box_rescue},
            {"seed", seed},
            {"supported_modes", mode_list}};
}

ToyWorldConfig ToyWorldConfig::from_json(const json& j) {
    static const std::set<std::string> keys = {"vocabulary", "misground_map", "corruption",
                                               "box_rescue", "seed", "supported_modes"};
    if (!j.is_object()) {
        throw Error(ErrorCode::SchemaViolation, "toy world config must be an object");
    }
    for (const auto& [k, _] : j.items()) {
        if (!keys.contains(k)) {
            throw Error(ErrorCode::SchemaViolation, "unknown toy world key \"" + k + "\"");
        }
    }
    ToyWorldConfig w;
    try {
        for (const auto& v : j.value("vocabulary", json::array())) {
            w.vocabulary.insert(validate_phrase(v.get<std::string>()).text());
        }
        const json mis = j.value("misground_map", json::object());
        for (const auto& [from, to] : mis.items()) {
            Misground m;
            if (to.is_string()) {
                m.to = to.get<std::string>();
            } else {
                m.to = to.at("to").get<std::string>();
                m.shadows_vocabulary = to.value("shadows_vocabulary", false);
            }
            m.to = validate_phrase(m.to).text();
            w.misground_map[validate_phrase(from).text()] = m;
        }
        const auto c = j.value("corruption", json::object());
        w.corruption = {c.value("dilate_px", 0), c.value("erode_px", 0), c.value("shift_px", 0)};
        w.box_rescue = j.value("box_rescue", false);
        w.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("supported_modes")) {
            w.modes.clear();
            for (const auto& m : j.at("supported_modes")) {
                w.modes.insert(prompt_mode_from_string(m.get<std::string>()));
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("toy world config: ") + e.what());
    }
    if (w.corruption.dilate_px < 0 || w.corruption.erode_px < 0 || w.corruption.shift_px < 0) {
        throw Error(ErrorCode::SchemaViolation, "corruption magnitudes must be >= 0");
    }
    return w;
}

SegmentationResult toy_segment(const ToyWorldConfig& world, std::span<const SceneObject> objects,
                               int width, int height, std::uint64_t scene_seed,
                               const PromptBundle& prompt) {
    const BinaryMask* chosen = nullptr;
    double confidence = 0.0;

    if (prompt.mode() != PromptMode::Box) {
        const auto& phrase = *prompt.phrase();
        const auto mis = world.misground_map.find(phrase.text());
        const bool shadowed = mis != world.misground_map.end() && mis->second.shadows_vocabulary;
        if (world.vocabulary.contains(phrase.text()) && !shadowed) {
            if (const auto* o = find_object(objects, phrase)) {
                chosen = &o->mask;
                confidence = kToyConfidenceHit;
            }
        } else if (mis != world.misground_map.end()) {
            if (const auto* o = find_object(objects, validate_phrase(mis->second.to))) {
                chosen = &o->mask;
                confidence = kToyConfidenceMisground;
            }
        }
    }

    const bool use_box = prompt.mode() == PromptMode::Box ||
                         (prompt.mode() == PromptMode::TextBox && world.box_rescue && !chosen);
    if (use_box) {
        const auto& box = *prompt.box();
        box.validate(width, height);
        double best = 0.0;
        for (const auto& o : objects) {
            const double iou = box_iou(o.mask, box);
            if (iou > best) {
                best = iou;
                chosen = &o.mask;
            }
        }
        confidence = best;
    }

    if (!chosen) {
        return {BinaryMask(width, height), 0.0, "toy", 0.0};
    }
    auto mask = dilate(*chosen, world.corruption.dilate_px);
    mask = erode(mask, world.corruption.erode_px);
    if (world.corruption.shift_px > 0) {
        DeterministicRng rng(world.seed ^ mix64(scene_seed));
        static constexpr int dirs[8][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1},
                                           {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
        const auto d = dirs[rng.uniform_int(0, 7)];
        mask = shift(mask, d[0] * world.corruption.shift_px, d[1] * world.corruption.shift_px);
    }
    return {std::move(mask), confidence, "toy", 0.0};
}

SegmentationResult toy_segment(const ToyWorldConfig& world, const SyntheticScene& scene,
                               const PromptBundle& prompt) {
    return toy_segment(world, scene.objects, scene.image.width(), scene.image.height(), scene.seed,
                       prompt);
}

std::string image_digest(const RasterImage& image) {
    const std::string header = std::to_string(image.width()) + "x" +
                               std::to_string(image.height()) + "x" +
                               std::to_string(image.channels()) + ":";
    std::vector<std::uint8_t> buf(header.begin(), header.end());
    const auto px = image.pixels();
    buf.insert(buf.end(), px.begin(), px.end());
    return sha256_hex(buf);
}

json scene_index_entry(const SyntheticScene& scene) {
    json objects = json::array();
    for (const auto& o : scene.objects) {
        objects.push_back({{"label", o.label.text()},
                           {"shape", to_string(o.shape)},
                           {"mask", rle_to_json(encode_rle(o.mask))}});
    }
    return {{"image_digest", image_digest(scene.image)},
            {"w", scene.image.width()},
            {"h", scene.image.height()},
            {"seed", scene.seed},
            {"objects", objects}};
}

void save_scene_index(const std::vector<SyntheticScene>& scenes, const std::filesystem::path& path) {
    json j{{"scenes", json::array()}};
    for (const auto& s : scenes) {
        j["scenes"].push_back(scene_index_entry(s));
    }
    write_file_atomic(path, j.dump() + "\n");
}

ToyBackend::ToyBackend(ToyWorldConfig world, const std::vector<SyntheticScene>& scenes)
    : world_(std::move(world)) {
    for (const auto& s : scenes) {
        scenes_.insert_or_assign(image_digest(s.image),
                                 Entry{s.image.width(), s.image.height(), s.seed, s.objects});
    }
}

ToyBackend::ToyBackend(ToyWorldConfig world, const std::filesystem::path& scene_index)
    : world_(std::move(world)) {
    try {
        const auto j = json::parse(read_text_file(scene_index));
        for (const auto& s : j.at("scenes")) {
            Entry e{s.at("w").get<int>(), s.at("h").get<int>(), s.at("seed").get<std::uint64_t>(),
                    {}};
            for (const auto& o : s.at("objects")) {
                e.objects.push_back({validate_phrase(o.at("label").get<std::string>()),
                                     shape_kind_from_string(o.at("shape").get<std::string>()),
                                     decode_rle(rle_from_json(o.at("mask")))});
            }
            scenes_.insert_or_assign(s.at("image_digest").get<std::string>(), std::move(e));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, scene_index.string() + ": " + e.what());
    }
}

SegmentationResult ToyBackend::segment(const RasterImage& image, const PromptBundle& prompt) {
    require_mode(*this, prompt.mode());
    const auto it = scenes_.find(image_digest(image));
    if (it == scenes_.end()) {
        throw Error(ErrorCode::BackendFailure, "image is not part of the toy scene index");
    }
    const auto& e = it->second;
    return toy_segment(world_, e.objects, e.width, e.height, e.seed, prompt);
}

ToyWorldConfig toy_world_preset(std::string_view name, const std::vector<std::string>& labels,
                                const std::vector<std::string>& targets) {
    ToyWorldConfig world;
    if (name == "full-vocab") {
        world.vocabulary = {labels.begin(), labels.end()};
    } else if (name == "empty-vocab") {
        world.box_rescue = true;
    } else if (name == "misground") {
        world.vocabulary = {labels.begin(), labels.end()};
        world.box_rescue = true;
        for (const auto& t : targets) {
            const auto it = std::find(labels.begin(), labels.end(), t);
            for (std::size_t k = 1; it != labels.end() && k < labels.size(); ++k) {
                const auto& other = labels[(static_cast<std::size_t>(it - labels.begin()) + k) % labels.size()];
                if (other != t) {
                    world.misground_map[t] = Misground{other, true};
                    break;
                }
            }
            if (!world.misground_map.contains(t)) {
                throw Error(ErrorCode::InvalidArgument, "misground preset needs a second label for " + t);
            }
        }
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown toy world preset " + std::string(name));
    }
    return world;
}

namespace {

std::string target_id_for(const std::string& label) {
    std::string id = label;
    std::replace(id.begin(), id.end(), ' ', '_');
    return id;
}

} // namespace

ToySuite write_toy_suite(const ToySuiteSpec& spec, const std::filesystem::path& dir) {
    if (spec.cases < 1) {
        throw Error(ErrorCode::InvalidArgument, "toy suite needs at least one case");
    }
    std::vector<std::string> labels;
    if (spec.scene.lexicon.empty()) {
        for (auto kind : spec.scene.shapes) {
            labels.emplace_back(to_string(kind));
        }
    } else {
        labels = spec.scene.lexicon;
    }
    std::vector<std::string> distinct;
    for (const auto& l : labels) {
        auto text = validate_phrase(l).text();
        if (std::find(distinct.begin(), distinct.end(), text) == distinct.end()) {
            distinct.push_back(std::move(text));
        }
    }
    labels = std::move(distinct);
    std::vector<std::string> targets = spec.targets.empty() ? labels : spec.targets;
    for (auto& t : targets) {
        t = validate_phrase(t).text();
        if (std::find(labels.begin(), labels.end(), t) == labels.end()) {
            throw Error(ErrorCode::InvalidArgument, "toy target " + t + " is not a scene label");
        }
    }

    std::error_code ec;
    std::filesystem::create_directories(dir / "images", ec);
    std::filesystem::create_directories(dir / "gt", ec);
    if (ec) {
        throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    }

    ToySuite suite;
    auto& m = suite.manifest;
    m.dataset_id = spec.dataset_id;
    m.modality = "synthetic";
    m.dimension = Dimension::D2;
    m.base_dir = dir;
    m.gt_decomposition = "one binary mask per scene label";
    for (const auto& t : targets) {
        m.targets.push_back({target_id_for(t), validate_phrase(t)});
    }
    for (int i = 0; i < spec.cases; ++i) {
        char case_id[32];
        std::snprintf(case_id, sizeof case_id, "case-%03d", i);
        auto scene = generate_scene(spec.scene, mix64(spec.seed + static_cast<std::uint64_t>(i)));
        const auto image_ref = std::filesystem::path("images") / (std::string(case_id) + ".png");
        write_png(dir / image_ref, scene.image);
        CaseRecord c;
        c.case_id = case_id;
        c.image_refs = {image_ref};
        c.split = spec.all_test ? Split::Test : Split::Unassigned;
        for (const auto& t : m.targets) {
            BinaryMask gt(scene.image.width(), scene.image.height());
            for (const auto& o : scene.objects) {
                if (o.label == t.phrase) {
                    for (std::size_t k = 0; k < o.mask.bits().size(); ++k) {
                        if (o.mask.test(k)) {
                            gt.set(k, true);
                        }
                    }
                }
            }
            const auto gt_ref =
                std::filesystem::path("gt") / (std::string(case_id) + "_" + t.target_id + ".png");
            write_mask_png(dir / gt_ref, gt);
            c.gt_refs[t.target_id] = {gt_ref};
        }
        m.cases.push_back(std::move(c));
        suite.scenes.push_back(std::move(scene));
    }
    suite.manifest_path = dir / "manifest.json";
    suite.scene_index_path = dir / "scenes.json";
    save_manifest(m, suite.manifest_path);
    save_scene_index(suite.scenes, suite.scene_index_path);
    for (auto preset : kToyWorldPresets) {
        if (preset == "misground" && labels.size() < 2) {
            continue;  // nothing to confuse the target with
        }
        write_file_atomic(dir / ("world-" + std::string(preset) + ".json"),
                          toy_world_preset(preset, labels, targets).to_json().dump(2) + "\n");
    }
    return suite;
}

} // namespace conceptseg
