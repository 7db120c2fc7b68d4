#pragma once

#include "conceptseg/components.hpp"
#include "conceptseg/core.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace conceptseg {

inline constexpr int kMaxPhraseWords = 3;

/// Normalized concept phrase: lowercase, single-space separated, 1..3 words.
class ConceptPhrase {
  public:
    const std::string& text() const noexcept { return text_; }
    int word_count() const noexcept { return word_count_; }

    friend bool operator==(const ConceptPhrase&, const ConceptPhrase&) = default;
    friend auto operator<=>(const ConceptPhrase&, const ConceptPhrase&) = default;

  private:
    friend ConceptPhrase validate_phrase(std::string_view raw);
    ConceptPhrase(std::string text, int words) : text_(std::move(text)), word_count_(words) {}

    std::string text_;
    int word_count_ = 0;
};

/// Trims, collapses whitespace and lowercases, then enforces the word rules.
/// Throws InvalidPhrase on empty input, more than three words, or characters
/// other than letters, digits and hyphens.
ConceptPhrase validate_phrase(std::string_view raw);

enum class PromptMode { Text, TextBox, Box };

std::string_view to_string(PromptMode mode);
PromptMode prompt_mode_from_string(std::string_view text);

/// Short method-row label: "T", "T+I" or "BOX".
std::string_view mode_label(PromptMode mode);

class PromptBundle {
  public:
    static PromptBundle text(ConceptPhrase phrase);
    static PromptBundle text_box(ConceptPhrase phrase, BoxPrompt box);
    static PromptBundle box_only(BoxPrompt box);

    PromptMode mode() const noexcept { return mode_; }
    const std::optional<ConceptPhrase>& phrase() const noexcept { return phrase_; }
    const std::optional<BoxPrompt>& box() const noexcept { return box_; }

    /// Wire form: {"mode", "phrase"?, "box"?}.
    nlohmann::json to_json() const;
    static PromptBundle from_json(const nlohmann::json& j);

    friend bool operator==(const PromptBundle&, const PromptBundle&) = default;

  private:
    PromptBundle(PromptMode mode, std::optional<ConceptPhrase> phrase, std::optional<BoxPrompt> box)
        : mode_(mode), phrase_(std::move(phrase)), box_(box) {}

    PromptMode mode_;
    std::optional<ConceptPhrase> phrase_;
    std::optional<BoxPrompt> box_;
};

struct RegistryEntry {
    std::string target_id;
    ConceptPhrase phrase;
    /// Casing as listed in the source table, for display only.
    std::string display;
};

/// Dataset -> target phrases. Seeded from the bundled registry JSON and extensible.
class PhraseRegistry {
  public:
    PhraseRegistry() = default;

    /// The registry compiled into the library.
    static const PhraseRegistry& builtin();
    static PhraseRegistry from_json(const nlohmann::json& j);
    static PhraseRegistry load(const std::filesystem::path& path);

    const std::string& version() const noexcept { return version_; }

    /// Throws UnknownDataset. Lookup ignores case, spaces, hyphens and underscores.
    const std::vector<RegistryEntry>& phrases(std::string_view dataset_id) const;
    bool contains(std::string_view dataset_id) const;
    std::optional<ConceptPhrase> find(std::string_view dataset_id,
                                      std::string_view target_id) const;

    void add(const std::string& dataset_id, std::vector<RegistryEntry> entries);
    std::vector<std::string> dataset_ids() const;

  private:
    std::string version_;
    std::map<std::string, std::string> canonical_ids_;
    std::map<std::string, std::vector<RegistryEntry>> entries_;
};

/// Free-function form of PhraseRegistry::builtin().phrases().
const std::vector<RegistryEntry>& registry_phrases(std::string_view dataset_id);

/// Tight box around the largest connected foreground component. Ties go to the
/// component holding the smallest row-major foreground index. Throws NoTarget
/// on an empty mask.
BoxPrompt largest_component_box(const BinaryMask& gt,
                                Connectivity connectivity = Connectivity::Eight);

} // namespace conceptseg
