#pragma once

#include "conceptseg/backend.hpp"
#include "conceptseg/core.hpp"
#include "conceptseg/prompts.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace conceptseg {

enum class ActionKind { SetPhrase, SetBox, Accept, RejectNoTarget };

std::string_view to_string(ActionKind kind);
ActionKind action_kind_from_string(std::string_view text);

/// One planner decision. SET_PHRASE and SET_BOX may both carry a phrase and a
/// box; the fields present define the next prompt (phrase only -> TEXT, box
/// only -> BOX, both -> TEXT_BOX).
struct AgentAction {
    ActionKind kind = ActionKind::Accept;
    std::optional<ConceptPhrase> phrase;
    std::optional<BoxPrompt> box;
    std::string rationale;

    bool mutates() const noexcept {
        return kind == ActionKind::SetPhrase || kind == ActionKind::SetBox;
    }
    /// The prompt a mutating action asks for.
    PromptBundle prompt() const;
    nlohmann::json to_json() const;
};

/// Extracts the single top-level JSON object embedded in `raw` and validates it.
/// Throws ActionParse on zero or several objects, unknown actions or broken
/// invariants (including phrases over the word limit).
AgentAction parse_action(std::string_view raw);

struct FeedbackText {
    double mask_area_fraction = 0.0;
    int component_count = 0;
    std::optional<BoxPrompt> bbox;
    double confidence = 0.0;
    int round_index = 1;

    nlohmann::json to_json() const;
    static FeedbackText from_json(const nlohmann::json& j);
};

struct FeedbackPacket {
    RasterImage overlay;
    FeedbackText textual;
};

/// Overlay plus statistics computed from the predicted mask alone (8-connected
/// components, tight bounds, backend confidence).
FeedbackPacket build_feedback(const RasterImage& image, const SegmentationResult& result,
                              int round_index);

// ---------------------------------------------------------------------------
// MLLM boundary

enum class Role { System, User, Assistant };
std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct Attachment {
    /// "image" for the query image, "overlay" for feedback renders.
    std::string kind;
    /// sha256 of the PNG bytes.
    std::string digest;
    std::vector<std::uint8_t> png;
};

Attachment make_attachment(std::string kind, const RasterImage& image);

struct MllmMessage {
    Role role = Role::User;
    std::string text;
    std::vector<Attachment> attachments;
};

/// Request = ordered message list, response = free text. Implementations must
/// tolerate concurrent sessions.
class MllmClient {
  public:
    virtual ~MllmClient() = default;
    /// Throws Transport / Timeout / MalformedResponse.
    virtual std::string complete(const std::vector<MllmMessage>& messages) = 0;
    virtual std::string id() const = 0;
};

/// sha256 over roles, texts and attachment digests; keys recorded exchanges.
std::string conversation_digest(const std::vector<MllmMessage>& messages);

/// The fixed system contract every session opens with.
std::string_view agent_system_contract();

/// Text prefix for feedback messages; the payload is FeedbackText JSON.
inline constexpr std::string_view kFeedbackPrefix = "FEEDBACK ";
inline constexpr std::string_view kQueryPrefix = "QUERY: ";

// ---------------------------------------------------------------------------
// Sessions

enum class Termination { Accepted, NoTarget, BudgetExhausted };
std::string_view to_string(Termination t);
Termination termination_from_string(std::string_view text);

struct AgentRound {
    int index = 1;
    std::string raw_response;
    int reasks = 0;
    std::optional<AgentAction> action;
    /// Prompt state after the action (mutating rounds only).
    std::optional<PromptBundle> prompt;
    std::optional<std::string> result_digest;
    std::optional<FeedbackText> feedback;
    std::optional<std::string> overlay_digest;
    std::optional<std::string> error;
};

struct MessageRecord {
    Role role = Role::User;
    std::string text;
    std::vector<std::pair<std::string, std::string>> attachments; // (kind, digest)
};

struct AgentTranscript {
    std::string image_digest;
    std::string user_query;
    int budget = 3;
    std::string mllm_id;
    std::string backend_id;
    std::vector<MessageRecord> messages;
    std::vector<AgentRound> rounds;
    Termination termination = Termination::BudgetExhausted;
    /// Round whose mask was finalized; absent for NO_TARGET or when no round produced a mask.
    std::optional<int> final_round;
    std::vector<BinaryMask> final_masks;
    std::vector<std::string> notes;
    /// PNG payloads by digest (query image and overlays); persisted to the blob directory.
    std::map<std::string, std::vector<std::uint8_t>> blobs;

    nlohmann::json to_json() const;
    static AgentTranscript from_json(const nlohmann::json& j);
};

/// Digest of a mask's canonical RLE; what transcripts record per result.
std::string mask_digest(const BinaryMask& mask);

inline constexpr int kDefaultAgentBudget = 3;

/// Plan / act / inspect loop. Each round asks the MLLM for one action; a parse
/// failure gets one re-ask, a second failure ends the session. ACCEPT finalizes
/// the latest mask, REJECT_NO_TARGET ends with no masks, and running out of
/// rounds finalizes the highest-confidence mask (earliest on ties).
/// Throws InvalidArgument for budget < 1; MLLM transport errors propagate.
AgentTranscript run_agent(const RasterImage& image, const std::string& user_query,
                          SegmentationBackend& backend, MllmClient& mllm,
                          int budget = kDefaultAgentBudget);

/// One independent session per target query; each gets its own budget.
std::vector<AgentTranscript> run_agent_multi(const RasterImage& image,
                                             const std::vector<std::string>& target_queries,
                                             SegmentationBackend& backend, MllmClient& mllm,
                                             int budget = kDefaultAgentBudget);

/// Writes <dir>/<name>.json and the PNG blobs under <dir>/blobs/<digest>.png.
std::filesystem::path save_transcript(const AgentTranscript& transcript,
                                      const std::filesystem::path& dir, const std::string& name);
/// Loads a transcript and the blobs it references.
AgentTranscript load_transcript(const std::filesystem::path& path);

struct ReplayMismatch {
    int round_index = 0;
    std::string expected;
    std::string actual;
};

/// Re-runs every recorded prompt against `backend` and compares result digests.
std::vector<ReplayMismatch> replay_transcript(const AgentTranscript& transcript,
                                              const RasterImage& image,
                                              SegmentationBackend& backend);
/// Same, with the query image taken from the transcript's blobs.
std::vector<ReplayMismatch> replay_transcript(const AgentTranscript& transcript,
                                              SegmentationBackend& backend);

// ---------------------------------------------------------------------------
// Clients

/// Answers turn i of a session (counted by assistant messages so far) with
/// response i; the last response repeats.
class ScriptedMllm : public MllmClient {
  public:
    explicit ScriptedMllm(std::vector<std::string> responses);
    /// One response per line; blank lines and lines starting with '#' are ignored.
    static ScriptedMllm from_file(const std::filesystem::path& path);
    std::string complete(const std::vector<MllmMessage>& messages) override;
    std::string id() const override { return "mock:script"; }

  private:
    std::vector<std::string> responses_;
};

/// SET_PHRASE with the query on rounds 1..n, ACCEPT afterwards.
class AcceptAfterMllm : public MllmClient {
  public:
    explicit AcceptAfterMllm(int n) : n_(n) {}
    std::string complete(const std::vector<MllmMessage>& messages) override;
    std::string id() const override { return "mock:accept-after:" + std::to_string(n_); }

  private:
    int n_;
};

/// Stateless policy reading only the conversation. Round 1 asks for the query
/// phrase. Later rounds ACCEPT when the latest confidence strictly exceeds every
/// earlier one (at least two results needed); otherwise the policy tries one box
/// from a visual prior (pixels near the phrase's toy intensity, largest
/// 8-connected blob) and then re-issues its best prompt. When every result was
/// empty and the prior finds nothing it answers REJECT_NO_TARGET.
class AcceptIfImprovedMllm : public MllmClient {
  public:
    std::string complete(const std::vector<MllmMessage>& messages) override;
    std::string id() const override { return "mock:accept-iff-improved"; }
};

/// Box around the largest 8-connected blob within +/-tolerance of the phrase's
/// toy intensity, or nullopt.
std::optional<BoxPrompt> toy_visual_prior(const RasterImage& image, const ConceptPhrase& phrase,
                                          int tolerance = 7);

/// Chat-completions style HTTP client (POST <endpoint>/v1/chat/completions).
class LiveChatClient : public MllmClient {
  public:
    struct Options {
        std::string model = "default";
        std::string api_key;
        std::chrono::milliseconds timeout{60000};
    };
    LiveChatClient(std::string endpoint, Options options);
    std::string complete(const std::vector<MllmMessage>& messages) override;
    std::string id() const override { return "live:" + endpoint_; }
    /// Request body for `messages`; exposed for tests.
    nlohmann::json request_body(const std::vector<MllmMessage>& messages) const;

  private:
    std::string endpoint_;
    Options options_;
};

/// Appends (conversation digest, response) lines to a JSON-lines file.
class RecordingMllm : public MllmClient {
  public:
    RecordingMllm(std::shared_ptr<MllmClient> inner, std::filesystem::path path);
    std::string complete(const std::vector<MllmMessage>& messages) override;
    std::string id() const override { return inner_->id(); }

  private:
    std::shared_ptr<MllmClient> inner_;
    std::filesystem::path path_;
    std::mutex mu_;
};

/// Serves recorded responses by conversation digest; a miss throws ReplayMiss.
class ReplayMllm : public MllmClient {
  public:
    explicit ReplayMllm(const std::filesystem::path& path);
    std::string complete(const std::vector<MllmMessage>& messages) override;
    std::string id() const override { return "replay"; }

  private:
    std::map<std::string, std::string> responses_;
};

/// "mock:accept-iff-improved", "mock:accept-after:N", "mock:script:<file>",
/// "live:<url>", "replay:<file>". Throws InvalidArgument.
std::shared_ptr<MllmClient> make_mllm_client(const std::string& spec);

} // namespace conceptseg
