#pragma once

#include "conceptseg/backend.hpp"
#include "conceptseg/core.hpp"
#include "conceptseg/datasets.hpp"
#include "conceptseg/prompts.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace conceptseg {

enum class ShapeKind { Disk, Rectangle, Ring };

std::string_view to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(std::string_view text);

struct SceneSpec {
    int width = 64;
    int height = 64;
    int object_count = 1;
    std::vector<ShapeKind> shapes{ShapeKind::Disk};
    /// Object i is labelled lexicon[i % size]; empty means "label = shape name".
    std::vector<std::string> lexicon;
    /// Radius (disk, ring outer) or half-extent (rectangle), drawn uniformly.
    int min_size = 4;
    int max_size = 10;
    /// Uniform pixel noise amplitude added to the rendered image.
    int noise = 4;
    int max_attempts = 500;
};

struct SceneObject {
    ConceptPhrase label;
    ShapeKind shape = ShapeKind::Disk;
    BinaryMask mask;
};

struct SyntheticScene {
    RasterImage image;
    std::vector<SceneObject> objects;
    std::uint64_t seed = 0;

    /// First object carrying `label`, or nullptr.
    const SceneObject* find(const ConceptPhrase& label) const;
};

/// Gray level used to render objects of a given label. The scripted agent's
/// visual prior uses the same mapping.
std::uint8_t toy_label_intensity(const ConceptPhrase& label);
inline constexpr int kToyBackgroundLevel = 16;

BinaryMask rasterize_disk(int width, int height, int cx, int cy, int radius);
BinaryMask rasterize_rectangle(int width, int height, int cx, int cy, int half_w, int half_h);
/// Pixels with (r/2)^2 < d^2 <= r^2, inner radius at least 1.
BinaryMask rasterize_ring(int width, int height, int cx, int cy, int radius);

/// Deterministic from (spec, seed). Objects are pairwise disjoint and separated
/// by at least one background pixel. Throws InfeasiblePacking.
SyntheticScene generate_scene(const SceneSpec& spec, std::uint64_t seed);

/// Square (Chebyshev) structuring element of radius `px`; pixels outside the grid
/// count as background, so erosion eats into masks touching the border.
BinaryMask dilate(const BinaryMask& mask, int px);
BinaryMask erode(const BinaryMask& mask, int px);
/// Pixels moved outside the grid are dropped.
BinaryMask shift(const BinaryMask& mask, int dx, int dy);

struct Misground {
    std::string to;
    /// When set, the phrase is misgrounded even if it is in the vocabulary.
    bool shadows_vocabulary = false;
};

struct Corruption {
    int dilate_px = 0;
    int erode_px = 0;
    int shift_px = 0;
};

struct ToyWorldConfig {
    std::set<std::string> vocabulary;
    std::map<std::string, Misground> misground_map;
    Corruption corruption;
    bool box_rescue = false;
    std::uint64_t seed = 0;
    std::set<PromptMode> modes{PromptMode::Text, PromptMode::TextBox, PromptMode::Box};

    nlohmann::json to_json() const;
    /// Rejects unknown keys and negative corruption magnitudes.
    static ToyWorldConfig from_json(const nlohmann::json& j);
};

inline constexpr double kToyConfidenceHit = 1.0;
inline constexpr double kToyConfidenceMisground = 0.35;

/// Resolution: (1) TEXT/TEXT_BOX in-vocabulary phrase -> that object's mask;
/// (2) misground hit -> mapped object's mask; (3) otherwise empty; (4) BOX, or
/// TEXT_BOX with box_rescue after an empty text result -> the object with the
/// highest IoU against the box. Corruption then applies dilate, erode, shift.
SegmentationResult toy_segment(const ToyWorldConfig& world, const SyntheticScene& scene,
                               const PromptBundle& prompt);
SegmentationResult toy_segment(const ToyWorldConfig& world, std::span<const SceneObject> objects,
                               int width, int height, std::uint64_t scene_seed,
                               const PromptBundle& prompt);

/// Recognizes scene images by pixel digest and answers via toy_segment.
class ToyBackend : public SegmentationBackend {
  public:
    ToyBackend(ToyWorldConfig world, const std::vector<SyntheticScene>& scenes);
    /// Loads a scene index written by save_scene_index.
    ToyBackend(ToyWorldConfig world, const std::filesystem::path& scene_index);

    SegmentationResult segment(const RasterImage& image, const PromptBundle& prompt) override;
    std::string id() const override { return "toy"; }
    bool supports(PromptMode mode) const override { return world_.modes.contains(mode); }

    const ToyWorldConfig& world() const noexcept { return world_; }

  private:
    struct Entry {
        int width;
        int height;
        std::uint64_t seed;
        std::vector<SceneObject> objects;
    };
    ToyWorldConfig world_;
    std::map<std::string, Entry> scenes_;
};

/// Pixel digest used to key scenes: sha256 over extent, channels and pixels.
std::string image_digest(const RasterImage& image);

nlohmann::json scene_index_entry(const SyntheticScene& scene);
void save_scene_index(const std::vector<SyntheticScene>& scenes, const std::filesystem::path& path);

struct ToySuiteSpec {
    std::string dataset_id = "toy-suite";
    int cases = 50;
    SceneSpec scene;
    /// Labels that become manifest targets; empty means every lexicon label.
    std::vector<std::string> targets;
    std::uint64_t seed = 0;
    /// Put every case in the test split; otherwise cases are left unassigned.
    bool all_test = true;
};

struct ToySuite {
    std::filesystem::path manifest_path;
    std::filesystem::path scene_index_path;
    DatasetManifest manifest;
    std::vector<SyntheticScene> scenes;
};

/// World presets over a suite's labels:
///   "full-vocab"  every label in vocabulary;
///   "empty-vocab" nothing in vocabulary, box rescue on;
///   "misground"   every target shadowed by the next other label, box rescue on.
ToyWorldConfig toy_world_preset(std::string_view name, const std::vector<std::string>& labels,
                                const std::vector<std::string>& targets);
inline constexpr std::string_view kToyWorldPresets[] = {"full-vocab", "empty-vocab", "misground"};

/// Writes images/, gt/, manifest.json, scenes.json and world-<preset>.json under `dir`.
ToySuite write_toy_suite(const ToySuiteSpec& spec, const std::filesystem::path& dir);

} // namespace conceptseg
