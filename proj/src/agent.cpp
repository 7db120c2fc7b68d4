#include "conceptseg/agent.hpp"

#include "conceptseg/codec.hpp"
#include "conceptseg/components.hpp"

#include <algorithm>
#include <set>

namespace conceptseg {

using nlohmann::json;

std::string_view to_string(ActionKind kind) {
    switch (kind) {
    case ActionKind::SetPhrase:
        return "SET_PHRASE";
    case ActionKind::SetBox:
        return "SET_BOX";
    case ActionKind::Accept:
        return "ACCEPT";
    case ActionKind::RejectNoTarget:
        return "REJECT_NO_TARGET";
    }
    return "?";
}

ActionKind action_kind_from_string(std::string_view text) {
    for (auto k : {ActionKind::SetPhrase, ActionKind::SetBox, ActionKind::Accept,
                   ActionKind::RejectNoTarget}) {
        if (text == to_string(k)) {
            return k;
        }
    }
    throw Error(ErrorCode::ActionParse, "unknown action \"" + std::string(text) + "\"");
}

PromptBundle AgentAction::prompt() const {
    if (phrase && box) {
        return PromptBundle::text_box(*phrase, *box);
    }
    if (phrase) {
        return PromptBundle::text(*phrase);
    }
    if (box) {
        return PromptBundle::box_only(*box);
    }
    throw Error(ErrorCode::InvalidPrompt, "action carries no prompt");
}

json AgentAction::to_json() const {
    json j{{"action", std::string(conceptseg::to_string(kind))}};
    if (phrase) {
        j["phrase"] = phrase->text();
    }
    if (box) {
        j["box"] = box_to_json(*box);
    }
    j["rationale"] = rationale;
    return j;
}

namespace {

// Spans of balanced top-level {...} blocks; braces inside JSON strings do not count.
std::vector<std::string_view> top_level_objects(std::string_view text) {
    std::vector<std::string_view> out;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (depth > 0 && in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (depth > 0 && c == '"') {
            in_string = true;
        } else if (c == '{') {
            if (depth++ == 0) {
                start = i;
            }
        } else if (c == '}' && depth > 0) {
            if (--depth == 0) {
                out.push_back(text.substr(start, i - start + 1));
            }
        }
    }
    return out;
}

BoxPrompt action_box(const json& j) {
    BoxPrompt box;
    if (j.is_array()) {
        if (j.size() != 4) {
            throw Error(ErrorCode::ActionParse, "box array must have 4 entries");
        }
        try {
            box = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ActionParse, std::string("box: ") + e.what());
        }
    } else {
        try {
            box = box_from_json(j);
        } catch (const Error& e) {
            throw Error(ErrorCode::ActionParse, e.what());
        }
    }
    if (box.x_min < 0 || box.y_min < 0 || box.x_min > box.x_max || box.y_min > box.y_max) {
        throw Error(ErrorCode::ActionParse, "box corners out of order");
    }
    return box;
}

} // namespace

AgentAction parse_action(std::string_view raw) {
    std::vector<json> objects;
    for (auto span : top_level_objects(raw)) {
        auto parsed = json::parse(span, nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) {
            objects.push_back(std::move(parsed));
        }
    }
    if (objects.size() != 1) {
        throw Error(ErrorCode::ActionParse, "expected exactly one JSON object, found " +
                                                std::to_string(objects.size()));
    }
    const json& j = objects.front();
    static const std::set<std::string> known{"action", "phrase", "box", "rationale"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw Error(ErrorCode::ActionParse, "unknown field \"" + key + "\"");
        }
    }
    if (!j.contains("action") || !j.at("action").is_string()) {
        throw Error(ErrorCode::ActionParse, "missing \"action\"");
    }
    AgentAction a;
    a.kind = action_kind_from_string(j.at("action").get<std::string>());
    if (j.contains("rationale")) {
        if (!j.at("rationale").is_string()) {
            throw Error(ErrorCode::ActionParse, "\"rationale\" must be a string");
        }
        a.rationale = j.at("rationale").get<std::string>();
    }
    if (j.contains("phrase") && !j.at("phrase").is_null()) {
        if (!j.at("phrase").is_string()) {
            throw Error(ErrorCode::ActionParse, "\"phrase\" must be a string");
        }
        try {
            a.phrase = validate_phrase(j.at("phrase").get<std::string>());
        } catch (const Error& e) {
            throw Error(ErrorCode::ActionParse, e.what());
        }
    }
    if (j.contains("box") && !j.at("box").is_null()) {
        a.box = action_box(j.at("box"));
    }
    switch (a.kind) {
    case ActionKind::SetPhrase:
        if (!a.phrase) {
            throw Error(ErrorCode::ActionParse, "SET_PHRASE requires a phrase");
        }
        break;
    case ActionKind::SetBox:
        if (!a.box) {
            throw Error(ErrorCode::ActionParse, "SET_BOX requires a box");
        }
        break;
    case ActionKind::Accept:
    case ActionKind::RejectNoTarget:
        if (a.phrase || a.box) {
            throw Error(ErrorCode::ActionParse,
                        std::string(to_string(a.kind)) + " carries no phrase or box");
        }
        break;
    }
    return a;
}

json FeedbackText::to_json() const {
    json j{{"round_index", round_index},
           {"mask_area_fraction", mask_area_fraction},
           {"component_count", component_count},
           {"confidence", confidence}};
    if (bbox) {
        j["bbox"] = box_to_json(*bbox);
    }
    return j;
}

FeedbackText FeedbackText::from_json(const json& j) {
    FeedbackText f;
    try {
        f.round_index = j.at("round_index").get<int>();
        f.mask_area_fraction = j.at("mask_area_fraction").get<double>();
        f.component_count = j.at("component_count").get<int>();
        f.confidence = j.at("confidence").get<double>();
        if (j.contains("bbox")) {
            f.bbox = box_from_json(j.at("bbox"));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("feedback: ") + e.what());
    }
    return f;
}

FeedbackPacket build_feedback(const RasterImage& image, const SegmentationResult& result,
                              int round_index) {
    if (round_index < 1) {
        throw Error(ErrorCode::InvalidArgument, "round index starts at 1");
    }
    const auto& mask = result.mask;
    FeedbackText t;
    t.round_index = round_index;
    const auto total = static_cast<double>(mask.width()) * mask.height();
    t.mask_area_fraction = total > 0 ? static_cast<double>(mask.count()) / total : 0.0;
    t.component_count = static_cast<int>(label_components(mask, Connectivity::Eight).size());
    if (!mask.empty()) {
        t.bbox = foreground_bounds(mask);
    }
    t.confidence = result.confidence;
    const OverlayStyle style;
    return {overlay(to_rgb(image), mask, style.alpha, style.highlight), t};
}

std::string_view to_string(Role role) {
    switch (role) {
    case Role::System:
        return "system";
    case Role::User:
        return "user";
    case Role::Assistant:
        return "assistant";
    }
    return "?";
}

Role role_from_string(std::string_view text) {
    for (auto r : {Role::System, Role::User, Role::Assistant}) {
        if (text == to_string(r)) {
            return r;
        }
    }
    throw Error(ErrorCode::SchemaViolation, "unknown role " + std::string(text));
}

Attachment make_attachment(std::string kind, const RasterImage& image) {
    auto png = encode_png(image);
    auto digest = sha256_hex(std::span<const std::uint8_t>(png));
    return {std::move(kind), std::move(digest), std::move(png)};
}

std::string_view agent_system_contract() {
    return "You plan prompts for a concept segmentation tool that segments the target named by "
           "a short noun phrase, optionally guided by a box.\n"
           "Reply with exactly one JSON object and nothing else that looks like JSON:\n"
           "{\"action\": \"SET_PHRASE\" | \"SET_BOX\" | \"ACCEPT\" | \"REJECT_NO_TARGET\", "
           "\"phrase\": \"<at most 3 words>\", \"box\": [x_min, y_min, x_max, y_max], "
           "\"rationale\": \"<short reason>\"}\n"
           "SET_PHRASE needs a phrase, SET_BOX needs a box; give both to prompt with text and box "
           "together. A phrase alone segments by text, a box alone segments by box. ACCEPT keeps "
           "the latest mask; REJECT_NO_TARGET declares the target absent. Neither carries a "
           "phrase or box. Box corners are inclusive pixel indices.\n"
           "After each segmentation you receive FEEDBACK with statistics and an overlay image.";
}

std::string_view to_string(Termination t) {
    switch (t) {
    case Termination::Accepted:
        return "ACCEPTED";
    case Termination::NoTarget:
        return "NO_TARGET";
    case Termination::BudgetExhausted:
        return "BUDGET_EXHAUSTED";
    }
    return "?";
}

Termination termination_from_string(std::string_view text) {
    for (auto t : {Termination::Accepted, Termination::NoTarget, Termination::BudgetExhausted}) {
        if (text == to_string(t)) {
            return t;
        }
    }
    throw Error(ErrorCode::SchemaViolation, "unknown termination " + std::string(text));
}

std::string mask_digest(const BinaryMask& mask) {
    return sha256_hex(rle_to_json(encode_rle(mask)).dump());
}

namespace {

struct Session {
    std::vector<MllmMessage> messages;
    AgentTranscript transcript;

    void send(Role role, std::string text, std::vector<Attachment> attachments = {}) {
        MessageRecord record{role, text, {}};
        for (auto& a : attachments) {
            record.attachments.emplace_back(a.kind, a.digest);
            transcript.blobs.emplace(a.digest, a.png);
        }
        transcript.messages.push_back(std::move(record));
        messages.push_back({role, std::move(text), std::move(attachments)});
    }
};

struct Produced {
    int round;
    BinaryMask mask;
    double confidence;
};

void finalize_best(AgentTranscript& t, const std::vector<Produced>& produced, int width, int height) {
    t.termination = Termination::BudgetExhausted;
    const Produced* best = nullptr;
    for (const auto& p : produced) {
        if (best == nullptr || p.confidence > best->confidence) {
            best = &p;
        }
    }
    if (best == nullptr) {
        t.notes.push_back("no round produced a mask; returning an empty mask");
        t.final_masks = {BinaryMask(width, height)};
        return;
    }
    t.final_round = best->round;
    t.final_masks = {best->mask};
}

} // namespace

AgentTranscript run_agent(const RasterImage& image, const std::string& user_query,
                          SegmentationBackend& backend, MllmClient& mllm, int budget) {
    if (budget < 1) {
        throw Error(ErrorCode::InvalidArgument, "agent budget must be at least 1");
    }
    Session s;
    auto& t = s.transcript;
    t.user_query = user_query;
    t.budget = budget;
    t.mllm_id = mllm.id();
    t.backend_id = backend.id();

    auto query_image = make_attachment("image", image);
    t.image_digest = query_image.digest;
    s.send(Role::System, std::string(agent_system_contract()));
    s.send(Role::User, std::string(kQueryPrefix) + user_query, {std::move(query_image)});

    std::vector<Produced> produced;
    bool terminated = false;
    for (int r = 1; r <= budget && !terminated; ++r) {
        AgentRound round;
        round.index = r;
        std::optional<AgentAction> action;
        std::string parse_error;
        for (int attempt = 0; attempt < 2 && !action; ++attempt) {
            round.raw_response = mllm.complete(s.messages);
            s.send(Role::Assistant, round.raw_response);
            try {
                auto a = parse_action(round.raw_response);
                if (a.box) {
                    try {
                        a.box->validate(image.width(), image.height());
                    } catch (const Error& e) {
                        throw Error(ErrorCode::ActionParse, e.what());
                    }
                }
                if (a.kind == ActionKind::Accept && produced.empty()) {
                    throw Error(ErrorCode::ActionParse, "ACCEPT before any mask was produced");
                }
                action = std::move(a);
            } catch (const Error& e) {
                parse_error = e.what();
                if (attempt == 0) {
                    round.reasks = 1;
                    s.send(Role::User, "INVALID ACTION: " + parse_error +
                                           ". Reply with exactly one JSON action object.");
                }
            }
        }
        if (!action) {
            round.error = "unparseable action after re-ask: " + parse_error;
            t.notes.push_back("round " + std::to_string(r) + ": " + *round.error);
            t.rounds.push_back(std::move(round));
            finalize_best(t, produced, image.width(), image.height());
            terminated = true;
            break;
        }
        round.action = action;
        switch (action->kind) {
        case ActionKind::Accept: {
            const auto& latest = produced.back();
            t.termination = Termination::Accepted;
            t.final_round = latest.round;
            t.final_masks = {latest.mask};
            terminated = true;
            break;
        }
        case ActionKind::RejectNoTarget:
            t.termination = Termination::NoTarget;
            terminated = true;
            break;
        case ActionKind::SetPhrase:
        case ActionKind::SetBox: {
            const auto prompt = action->prompt();
            round.prompt = prompt;
            try {
                auto result = backend.segment(image, prompt);
                if (result.mask.width() != image.width() || result.mask.height() != image.height()) {
                    throw Error(ErrorCode::DimensionMismatch, "backend mask extent differs from image");
                }
                auto packet = build_feedback(image, result, r);
                auto overlay_att = make_attachment("overlay", packet.overlay);
                round.result_digest = mask_digest(result.mask);
                round.feedback = packet.textual;
                round.overlay_digest = overlay_att.digest;
                s.send(Role::User, std::string(kFeedbackPrefix) + packet.textual.to_json().dump(),
                       {std::move(overlay_att)});
                produced.push_back({r, std::move(result.mask), result.confidence});
            } catch (const Error& e) {
                round.error = e.what();
                t.notes.push_back("round " + std::to_string(r) + ": segmentation failed: " + e.what());
                s.send(Role::User, std::string(kFeedbackPrefix) +
                                       json{{"round_index", r}, {"error", "segmentation failed"}}.dump());
            }
            break;
        }
        }
        t.rounds.push_back(std::move(round));
    }
    if (!terminated) {
        finalize_best(t, produced, image.width(), image.height());
    }
    return t;
}

std::vector<AgentTranscript> run_agent_multi(const RasterImage& image,
                                             const std::vector<std::string>& target_queries,
                                             SegmentationBackend& backend, MllmClient& mllm,
                                             int budget) {
    std::vector<AgentTranscript> out;
    out.reserve(target_queries.size());
    for (const auto& q : target_queries) {
        out.push_back(run_agent(image, q, backend, mllm, budget));
    }
    return out;
}

json AgentTranscript::to_json() const {
    json msgs = json::array();
    for (const auto& m : messages) {
        json atts = json::array();
        for (const auto& [kind, digest] : m.attachments) {
            atts.push_back({{"kind", kind}, {"digest", digest}});
        }
        msgs.push_back({{"role", std::string(conceptseg::to_string(m.role))},
                        {"text", m.text},
                        {"attachments", atts}});
    }
    json rs = json::array();
    for (const auto& r : rounds) {
        json j{{"index", r.index}, {"raw_response", r.raw_response}, {"reasks", r.reasks}};
        if (r.action) {
            j["action"] = r.action->to_json();
        }
        if (r.prompt) {
            j["prompt"] = r.prompt->to_json();
        }
        if (r.result_digest) {
            j["result_digest"] = *r.result_digest;
        }
        if (r.feedback) {
            j["feedback"] = r.feedback->to_json();
        }
        if (r.overlay_digest) {
            j["overlay"] = *r.overlay_digest;
        }
        if (r.error) {
            j["error"] = *r.error;
        }
        rs.push_back(std::move(j));
    }
    json masks = json::array();
    for (const auto& m : final_masks) {
        masks.push_back({{"digest", mask_digest(m)}, {"rle", rle_to_json(encode_rle(m))}});
    }
    json j{{"schema", "conceptseg.transcript/1"},
           {"request", {{"image", image_digest}, {"user_query", user_query}}},
           {"budget", budget},
           {"mllm", mllm_id},
           {"backend", backend_id},
           {"messages", msgs},
           {"rounds", rs},
           {"termination", std::string(conceptseg::to_string(termination))},
           {"final_round", final_round ? json(*final_round) : json(nullptr)},
           {"final_masks", masks},
           {"notes", notes}};
    return j;
}

AgentTranscript AgentTranscript::from_json(const json& j) {
    AgentTranscript t;
    try {
        if (j.at("schema") != "conceptseg.transcript/1") {
            throw Error(ErrorCode::SchemaViolation, "unsupported transcript schema");
        }
        t.image_digest = j.at("request").at("image").get<std::string>();
        t.user_query = j.at("request").at("user_query").get<std::string>();
        t.budget = j.at("budget").get<int>();
        t.mllm_id = j.value("mllm", std::string{});
        t.backend_id = j.value("backend", std::string{});
        for (const auto& m : j.at("messages")) {
            MessageRecord rec{role_from_string(m.at("role").get<std::string>()),
                              m.at("text").get<std::string>(),
                              {}};
            for (const auto& a : m.at("attachments")) {
                rec.attachments.emplace_back(a.at("kind").get<std::string>(),
                                             a.at("digest").get<std::string>());
            }
            t.messages.push_back(std::move(rec));
        }
        for (const auto& rj : j.at("rounds")) {
            AgentRound r;
            r.index = rj.at("index").get<int>();
            r.raw_response = rj.value("raw_response", std::string{});
            r.reasks = rj.value("reasks", 0);
            if (rj.contains("action")) {
                r.action = parse_action(rj.at("action").dump());
            }
            if (rj.contains("prompt")) {
                r.prompt = PromptBundle::from_json(rj.at("prompt"));
            }
            if (rj.contains("result_digest")) {
                r.result_digest = rj.at("result_digest").get<std::string>();
            }
            if (rj.contains("feedback")) {
                r.feedback = FeedbackText::from_json(rj.at("feedback"));
            }
            if (rj.contains("overlay")) {
                r.overlay_digest = rj.at("overlay").get<std::string>();
            }
            if (rj.contains("error")) {
                r.error = rj.at("error").get<std::string>();
            }
            t.rounds.push_back(std::move(r));
        }
        t.termination = termination_from_string(j.at("termination").get<std::string>());
        if (!j.at("final_round").is_null()) {
            t.final_round = j.at("final_round").get<int>();
        }
        for (const auto& m : j.at("final_masks")) {
            t.final_masks.push_back(decode_rle(rle_from_json(m.at("rle"))));
        }
        t.notes = j.value("notes", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("transcript: ") + e.what());
    }
    return t;
}

std::filesystem::path save_transcript(const AgentTranscript& transcript,
                                      const std::filesystem::path& dir, const std::string& name) {
    const auto blob_dir = dir / "blobs";
    std::error_code ec;
    std::filesystem::create_directories(blob_dir, ec);
    if (ec) {
        throw Error(ErrorCode::Io, "cannot create " + blob_dir.string() + ": " + ec.message());
    }
    for (const auto& [digest, bytes] : transcript.blobs) {
        const auto path = blob_dir / (digest + ".png");
        if (!std::filesystem::exists(path)) {
            write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                                     bytes.size()));
        }
    }
    const auto path = dir / (name + ".json");
    write_file_atomic(path, transcript.to_json().dump(2) + "\n");
    return path;
}

AgentTranscript load_transcript(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
    auto t = AgentTranscript::from_json(j);
    const auto blob_dir = path.parent_path() / "blobs";
    auto load_blob = [&](const std::string& digest) {
        const auto p = blob_dir / (digest + ".png");
        if (std::filesystem::exists(p)) {
            t.blobs.emplace(digest, read_file_bytes(p));
        }
    };
    load_blob(t.image_digest);
    for (const auto& m : t.messages) {
        for (const auto& [_, digest] : m.attachments) {
            load_blob(digest);
        }
    }
    return t;
}

std::vector<ReplayMismatch> replay_transcript(const AgentTranscript& transcript,
                                              const RasterImage& image,
                                              SegmentationBackend& backend) {
    std::vector<ReplayMismatch> out;
    for (const auto& r : transcript.rounds) {
        if (!r.prompt || !r.result_digest) {
            continue;
        }
        std::string actual;
        try {
            actual = mask_digest(backend.segment(image, *r.prompt).mask);
        } catch (const Error& e) {
            actual = std::string("error: ") + e.what();
        }
        if (actual != *r.result_digest) {
            out.push_back({r.index, *r.result_digest, actual});
        }
    }
    return out;
}

std::vector<ReplayMismatch> replay_transcript(const AgentTranscript& transcript,
                                              SegmentationBackend& backend) {
    const auto it = transcript.blobs.find(transcript.image_digest);
    if (it == transcript.blobs.end()) {
        throw Error(ErrorCode::MissingFile, "transcript image blob " + transcript.image_digest);
    }
    return replay_transcript(transcript, decode_png(it->second), backend);
}

} // namespace conceptseg
