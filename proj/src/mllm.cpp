#include "conceptseg/agent.hpp"

#include "conceptseg/codec.hpp"
#include "conceptseg/components.hpp"
#include "conceptseg/toy.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace conceptseg {

using nlohmann::json;

std::string conversation_digest(const std::vector<MllmMessage>& messages) {
    json j = json::array();
    for (const auto& m : messages) {
        json atts = json::array();
        for (const auto& a : m.attachments) {
            atts.push_back(a.digest);
        }
        j.push_back({std::string(to_string(m.role)), m.text, atts});
    }
    return sha256_hex(j.dump());
}

namespace {

int assistant_turns(const std::vector<MllmMessage>& messages) {
    return static_cast<int>(std::count_if(messages.begin(), messages.end(),
                                          [](const MllmMessage& m) { return m.role == Role::Assistant; }));
}

const MllmMessage& query_message(const std::vector<MllmMessage>& messages) {
    for (const auto& m : messages) {
        if (m.role == Role::User && m.text.starts_with(kQueryPrefix)) {
            return m;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "conversation has no query message");
}

// The query as a phrase, falling back to its last three words.
ConceptPhrase query_phrase(const std::string& query) {
    try {
        return validate_phrase(query);
    } catch (const Error&) {
    }
    std::istringstream in(query);
    std::vector<std::string> words;
    for (std::string w; in >> w;) {
        words.push_back(w);
    }
    for (std::size_t n = std::min<std::size_t>(kMaxPhraseWords, words.size()); n > 0; --n) {
        std::string tail;
        for (std::size_t i = words.size() - n; i < words.size(); ++i) {
            tail += (tail.empty() ? "" : " ") + words[i];
        }
        try {
            return validate_phrase(tail);
        } catch (const Error&) {
        }
    }
    throw Error(ErrorCode::InvalidPhrase, "no usable phrase in query \"" + query + "\"");
}

std::string action_text(const AgentAction& a) { return a.to_json().dump(); }

} // namespace

ScriptedMllm::ScriptedMllm(std::vector<std::string> responses) : responses_(std::move(responses)) {
    if (responses_.empty()) {
        throw Error(ErrorCode::InvalidArgument, "scripted MLLM needs at least one response");
    }
}

ScriptedMllm ScriptedMllm::from_file(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        lines.push_back(line);
    }
    return ScriptedMllm(std::move(lines));
}

std::string ScriptedMllm::complete(const std::vector<MllmMessage>& messages) {
    // Indexed by assistant turns so concurrent sessions each follow the script.
    const auto i = static_cast<std::size_t>(assistant_turns(messages));
    return responses_[std::min(i, responses_.size() - 1)];
}

std::string AcceptAfterMllm::complete(const std::vector<MllmMessage>& messages) {
    AgentAction a;
    if (assistant_turns(messages) < n_) {
        a.kind = ActionKind::SetPhrase;
        a.phrase = query_phrase(query_message(messages).text.substr(kQueryPrefix.size()));
        a.rationale = "segment the queried concept";
    } else {
        a.kind = ActionKind::Accept;
        a.rationale = "round limit of this policy reached";
    }
    return action_text(a);
}

std::optional<BoxPrompt> toy_visual_prior(const RasterImage& image, const ConceptPhrase& phrase,
                                          int tolerance) {
    const int level = toy_label_intensity(phrase);
    BinaryMask near(image.width(), image.height());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            if (std::abs(static_cast<int>(image.at(x, y, 0)) - level) <= tolerance) {
                near.set(x, y, true);
            }
        }
    }
    if (near.empty()) {
        return std::nullopt;
    }
    return largest_component_box(near, Connectivity::Eight);
}

std::string AcceptIfImprovedMllm::complete(const std::vector<MllmMessage>& messages) {
    const auto& query = query_message(messages);
    const auto phrase = query_phrase(query.text.substr(kQueryPrefix.size()));

    struct Step {
        AgentAction action;
        std::optional<FeedbackText> feedback;
    };
    std::vector<Step> steps;
    for (const auto& m : messages) {
        if (m.role == Role::Assistant) {
            try {
                auto a = parse_action(m.text);
                if (a.mutates()) {
                    steps.push_back({std::move(a), std::nullopt});
                }
            } catch (const Error&) {
            }
        } else if (m.role == Role::User && m.text.starts_with(kFeedbackPrefix) && !steps.empty()) {
            const auto j = json::parse(m.text.substr(kFeedbackPrefix.size()), nullptr, false);
            if (!j.is_discarded() && !j.contains("error")) {
                steps.back().feedback = FeedbackText::from_json(j);
            }
        }
    }

    AgentAction next;
    if (steps.empty()) {
        next.kind = ActionKind::SetPhrase;
        next.phrase = phrase;
        next.rationale = "start from the queried concept";
        return action_text(next);
    }

    std::vector<const Step*> results;
    for (const auto& s : steps) {
        if (s.feedback) {
            results.push_back(&s);
        }
    }
    if (results.size() >= 2 && steps.back().feedback) {
        const double latest = steps.back().feedback->confidence;
        bool improved = true;
        for (std::size_t i = 0; i + 1 < results.size(); ++i) {
            improved = improved && latest > results[i]->feedback->confidence;
        }
        if (improved) {
            next.kind = ActionKind::Accept;
            next.rationale = "confidence improved on every earlier round";
            return action_text(next);
        }
    }

    const auto image = decode_png(query.attachments.at(0).png);
    const auto prior = toy_visual_prior(image, phrase);
    const bool all_empty = std::all_of(results.begin(), results.end(), [](const Step* s) {
        return s->feedback->mask_area_fraction == 0.0;
    });
    if (all_empty && !prior) {
        next.kind = ActionKind::RejectNoTarget;
        next.rationale = "nothing segmented and nothing resembling the target is visible";
        return action_text(next);
    }
    const bool tried_box = std::any_of(steps.begin(), steps.end(), [](const Step& s) {
        return s.action.kind == ActionKind::SetBox;
    });
    if (!tried_box && prior) {
        next.kind = ActionKind::SetBox;
        next.box = prior;
        next.rationale = "box the region that looks like the target";
        return action_text(next);
    }
    const Step* best = nullptr;
    for (const auto* s : results) {
        if (best == nullptr || s->feedback->confidence > best->feedback->confidence) {
            best = s;
        }
    }
    if (best == nullptr) {
        next.kind = ActionKind::SetPhrase;
        next.phrase = phrase;
        next.rationale = "retry the queried concept";
        return action_text(next);
    }
    next = best->action;
    next.rationale = "repeat the most confident prompt";
    return action_text(next);
}

namespace {

struct UrlParts {
    std::string base;
    std::string prefix;
};

UrlParts split_url(const std::string& url) {
    const auto scheme = url.find("://");
    const auto path = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path == std::string::npos) {
        return {url, ""};
    }
    std::string prefix = url.substr(path);
    while (!prefix.empty() && prefix.back() == '/') {
        prefix.pop_back();
    }
    return {url.substr(0, path), prefix};
}

} // namespace

LiveChatClient::LiveChatClient(std::string endpoint, Options options)
    : endpoint_(std::move(endpoint)), options_(std::move(options)) {
    if (endpoint_.empty()) {
        throw Error(ErrorCode::InvalidArgument, "live MLLM endpoint is empty");
    }
}

json LiveChatClient::request_body(const std::vector<MllmMessage>& messages) const {
    json msgs = json::array();
    for (const auto& m : messages) {
        if (m.attachments.empty()) {
            msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.text}});
            continue;
        }
        json parts = json::array();
        parts.push_back({{"type", "text"}, {"text", m.text}});
        for (const auto& a : m.attachments) {
            parts.push_back({{"type", "image_url"},
                             {"image_url", {{"url", "data:image/png;base64," + base64_encode(a.png)}}}});
        }
        msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", parts}});
    }
    return {{"model", options_.model}, {"messages", msgs}, {"temperature", 0}};
}

std::string LiveChatClient::complete(const std::vector<MllmMessage>& messages) {
    const auto [base, prefix] = split_url(endpoint_);
    httplib::Client client(base);
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout).count();
    client.set_connection_timeout(us / 1000000, us % 1000000);
    client.set_read_timeout(us / 1000000, us % 1000000);
    client.set_write_timeout(us / 1000000, us % 1000000);
    httplib::Headers headers;
    if (!options_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + options_.api_key);
    }
    const auto res = client.Post(prefix + "/v1/chat/completions", headers,
                                 request_body(messages).dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        throw Error(err == httplib::Error::ConnectionTimeout ? ErrorCode::Timeout : ErrorCode::Transport,
                    "MLLM request to " + endpoint_ + " failed: " + httplib::to_string(err));
    }
    if (res->status != 200) {
        throw Error(ErrorCode::Transport,
                    "MLLM endpoint returned HTTP " + std::to_string(res->status));
    }
    const auto body = json::parse(res->body, nullptr, false);
    if (body.is_discarded()) {
        throw Error(ErrorCode::MalformedResponse, "MLLM response is not JSON");
    }
    try {
        const auto& content = body.at("choices").at(0).at("message").at("content");
        if (content.is_string()) {
            return content.get<std::string>();
        }
        // Some servers return content parts.
        std::string text;
        for (const auto& part : content) {
            if (part.value("type", std::string{}) == "text") {
                text += part.at("text").get<std::string>();
            }
        }
        return text;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedResponse, std::string("MLLM response: ") + e.what());
    }
}

RecordingMllm::RecordingMllm(std::shared_ptr<MllmClient> inner, std::filesystem::path path)
    : inner_(std::move(inner)), path_(std::move(path)) {}

std::string RecordingMllm::complete(const std::vector<MllmMessage>& messages) {
    auto response = inner_->complete(messages);
    const json line{{"conversation_digest", conversation_digest(messages)}, {"response", response}};
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot append to " + path_.string());
    }
    out << line.dump() << "\n";
    return response;
}

ReplayMllm::ReplayMllm(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) {
        ++n;
        if (line.empty()) {
            continue;
        }
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("conversation_digest") || !j.contains("response")) {
            throw Error(ErrorCode::SchemaViolation,
                        path.string() + ":" + std::to_string(n) + ": malformed record");
        }
        responses_[j.at("conversation_digest").get<std::string>()] = j.at("response").get<std::string>();
    }
}

std::string ReplayMllm::complete(const std::vector<MllmMessage>& messages) {
    const auto digest = conversation_digest(messages);
    const auto it = responses_.find(digest);
    if (it == responses_.end()) {
        throw Error(ErrorCode::ReplayMiss, "no recorded MLLM response for conversation " + digest);
    }
    return it->second;
}

std::shared_ptr<MllmClient> make_mllm_client(const std::string& spec) {
    if (spec == "mock:accept-iff-improved") {
        return std::make_shared<AcceptIfImprovedMllm>();
    }
    if (spec.starts_with("mock:accept-after:")) {
        const auto n = spec.substr(std::string("mock:accept-after:").size());
        try {
            std::size_t used = 0;
            const int value = std::stoi(n, &used);
            if (used == n.size() && value >= 0) {
                return std::make_shared<AcceptAfterMllm>(value);
            }
        } catch (const std::exception&) {
        }
        throw Error(ErrorCode::InvalidArgument, "bad round count in " + spec);
    }
    if (spec.starts_with("mock:script:")) {
        return std::make_shared<ScriptedMllm>(
            ScriptedMllm::from_file(spec.substr(std::string("mock:script:").size())));
    }
    if (spec.starts_with("live:")) {
        LiveChatClient::Options options;
        if (const char* key = std::getenv("CONCEPTSEG_MLLM_API_KEY")) {
            options.api_key = key;
        }
        if (const char* model = std::getenv("CONCEPTSEG_MLLM_MODEL")) {
            options.model = model;
        }
        return std::make_shared<LiveChatClient>(spec.substr(5), options);
    }
    if (spec.starts_with("replay:")) {
        return std::make_shared<ReplayMllm>(spec.substr(7));
    }
    throw Error(ErrorCode::InvalidArgument, "unknown MLLM client \"" + spec + "\"");
}

} // namespace conceptseg
