#include "conceptseg/prompts.hpp"

#include "conceptseg/codec.hpp"
#include "embedded_data.hpp"

#include <algorithm>
#include <cctype>

namespace conceptseg {

ConceptPhrase validate_phrase(std::string_view raw) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : raw) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
            continue;
        }
        if (!std::isalnum(c) && ch != '-') {
            throw Error(ErrorCode::InvalidPhrase, "phrase \"" + std::string(raw) +
                                                      "\" contains '" + std::string(1, ch) +
                                                      "'; only letters, digits and hyphens");
        }
        current.push_back(static_cast<char>(std::tolower(c)));
    }
    if (!current.empty()) {
        words.push_back(std::move(current));
    }
    if (words.empty()) {
        throw Error(ErrorCode::InvalidPhrase, "phrase is empty");
    }
    if (words.size() > static_cast<std::size_t>(kMaxPhraseWords)) {
        throw Error(ErrorCode::InvalidPhrase,
                    "phrase \"" + std::string(raw) + "\" has " + std::to_string(words.size()) +
                        " words; concept phrases are limited to no more than 3 words");
    }
    std::string text;
    for (const auto& w : words) {
        if (std::none_of(w.begin(), w.end(), [](char c) { return c != '-'; })) {
            throw Error(ErrorCode::InvalidPhrase, "word \"" + w + "\" has no letters or digits");
        }
        if (!text.empty()) {
            text.push_back(' ');
        }
        text += w;
    }
    return ConceptPhrase(std::move(text), static_cast<int>(words.size()));
}

std::string_view to_string(PromptMode mode) {
    switch (mode) {
    case PromptMode::Text: return "TEXT";
    case PromptMode::TextBox: return "TEXT_BOX";
    case PromptMode::Box: return "BOX";
    }
    return "?";
}

std::string_view mode_label(PromptMode mode) {
    switch (mode) {
    case PromptMode::Text: return "T";
    case PromptMode::TextBox: return "T+I";
    case PromptMode::Box: return "BOX";
    }
    return "?";
}

PromptMode prompt_mode_from_string(std::string_view text) {
    if (text == "TEXT" || text == "T") {
        return PromptMode::Text;
    }
    if (text == "TEXT_BOX" || text == "T+I") {
        return PromptMode::TextBox;
    }
    if (text == "BOX") {
        return PromptMode::Box;
    }
    throw Error(ErrorCode::UnsupportedMode, "unknown prompt mode \"" + std::string(text) + "\"");
}

PromptBundle PromptBundle::text(ConceptPhrase phrase) {
    return PromptBundle(PromptMode::Text, std::move(phrase), std::nullopt);
}

PromptBundle PromptBundle::text_box(ConceptPhrase phrase, BoxPrompt box) {
    return PromptBundle(PromptMode::TextBox, std::move(phrase), box);
}

PromptBundle PromptBundle::box_only(BoxPrompt box) {
    return PromptBundle(PromptMode::Box, std::nullopt, box);
}

nlohmann::json PromptBundle::to_json() const {
    nlohmann::json j{{"mode", to_string(mode_)}};
    if (phrase_) {
        j["phrase"] = phrase_->text();
    }
    if (box_) {
        j["box"] = box_to_json(*box_);
    }
    return j;
}

PromptBundle PromptBundle::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("mode") || !j.at("mode").is_string()) {
        throw Error(ErrorCode::InvalidPrompt, "prompt requires a string \"mode\"");
    }
    const auto mode = prompt_mode_from_string(j.at("mode").get<std::string>());
    std::optional<ConceptPhrase> phrase;
    std::optional<BoxPrompt> box;
    if (j.contains("phrase")) {
        if (!j.at("phrase").is_string()) {
            throw Error(ErrorCode::InvalidPrompt, "phrase must be a string");
        }
        phrase = validate_phrase(j.at("phrase").get<std::string>());
    }
    if (j.contains("box")) {
        box = box_from_json(j.at("box"));
    }
    switch (mode) {
    case PromptMode::Text:
        if (!phrase || box) {
            throw Error(ErrorCode::InvalidPrompt, "TEXT prompt needs a phrase and no box");
        }
        return text(*phrase);
    case PromptMode::TextBox:
        if (!phrase || !box) {
            throw Error(ErrorCode::InvalidPrompt, "TEXT_BOX prompt needs a phrase and a box");
        }
        return text_box(*phrase, *box);
    case PromptMode::Box:
        if (phrase || !box) {
            throw Error(ErrorCode::InvalidPrompt, "BOX prompt needs a box and no phrase");
        }
        return box_only(*box);
    }
    throw Error(ErrorCode::UnsupportedMode, "unreachable prompt mode");
}

namespace {

std::string canonical_dataset_id(std::string_view id) {
    std::string out;
    for (char ch : id) {
        if (ch == ' ' || ch == '-' || ch == '_') {
            continue;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    return out;
}

} // namespace

const PhraseRegistry& PhraseRegistry::builtin() {
    static const PhraseRegistry registry =
        from_json(nlohmann::json::parse(embedded::phrase_registry_json()));
    return registry;
}

PhraseRegistry PhraseRegistry::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("datasets") || !j.at("datasets").is_object()) {
        throw Error(ErrorCode::SchemaViolation, "registry needs a \"datasets\" object");
    }
    PhraseRegistry reg;
    reg.version_ = j.value("version", "");
    for (const auto& [dataset_id, list] : j.at("datasets").items()) {
        if (!list.is_array()) {
            throw Error(ErrorCode::SchemaViolation, "registry entry for " + dataset_id +
                                                        " must be an array");
        }
        std::vector<RegistryEntry> entries;
        for (const auto& e : list) {
            if (!e.contains("target_id") || !e.contains("phrase")) {
                throw Error(ErrorCode::SchemaViolation,
                            "registry items need target_id and phrase (" + dataset_id + ")");
            }
            const auto display = e.at("phrase").get<std::string>();
            entries.push_back({e.at("target_id").get<std::string>(), validate_phrase(display),
                               display});
        }
        reg.add(dataset_id, std::move(entries));
    }
    return reg;
}

PhraseRegistry PhraseRegistry::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_text_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
}

const std::vector<RegistryEntry>& PhraseRegistry::phrases(std::string_view dataset_id) const {
    const auto it = canonical_ids_.find(canonical_dataset_id(dataset_id));
    if (it == canonical_ids_.end()) {
        throw Error(ErrorCode::UnknownDataset,
                    "dataset \"" + std::string(dataset_id) + "\" is not in the phrase registry");
    }
    return entries_.at(it->second);
}

bool PhraseRegistry::contains(std::string_view dataset_id) const {
    return canonical_ids_.contains(canonical_dataset_id(dataset_id));
}

std::optional<ConceptPhrase> PhraseRegistry::find(std::string_view dataset_id,
                                                  std::string_view target_id) const {
    if (!contains(dataset_id)) {
        return std::nullopt;
    }
    for (const auto& e : phrases(dataset_id)) {
        if (e.target_id == target_id) {
            return e.phrase;
        }
    }
    return std::nullopt;
}

void PhraseRegistry::add(const std::string& dataset_id, std::vector<RegistryEntry> entries) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        for (std::size_t k = i + 1; k < entries.size(); ++k) {
            if (entries[i].target_id == entries[k].target_id) {
                throw Error(ErrorCode::SchemaViolation, "duplicate target_id \"" +
                                                            entries[i].target_id + "\" in " +
                                                            dataset_id);
            }
        }
    }
    if (canonical_ids_.contains(canonical_dataset_id(dataset_id))) {
        throw Error(ErrorCode::SchemaViolation, "dataset " + dataset_id + " is already registered");
    }
    canonical_ids_[canonical_dataset_id(dataset_id)] = dataset_id;
    entries_[dataset_id] = std::move(entries);
}

std::vector<std::string> PhraseRegistry::dataset_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, _] : entries_) {
        ids.push_back(id);
    }
    return ids;
}

const std::vector<RegistryEntry>& registry_phrases(std::string_view dataset_id) {
    return PhraseRegistry::builtin().phrases(dataset_id);
}

BoxPrompt largest_component_box(const BinaryMask& gt, Connectivity connectivity) {
    const auto components = label_components(gt, connectivity);
    if (components.empty()) {
        throw Error(ErrorCode::NoTarget, "ground truth has no foreground; no box derivable");
    }
    // Components arrive in first_index order, so strict '>' keeps the earliest on ties.
    const ComponentStats* best = &components.front();
    for (const auto& c : components) {
        if (c.pixel_count > best->pixel_count) {
            best = &c;
        }
    }
    return best->bounds;
}

} // namespace conceptseg
