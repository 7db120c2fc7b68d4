#pragma once

#include "conceptseg/core.hpp"
#include "conceptseg/prompts.hpp"

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>

#include <json.hpp>

namespace conceptseg {

struct SegmentationResult {
    BinaryMask mask;
    double confidence = 0.0;
    std::string backend_id;
    double latency_ms = 0.0;
};

/// Uniform segmentation boundary. Implementations must tolerate concurrent
/// segment() calls.
class SegmentationBackend {
  public:
    virtual ~SegmentationBackend() = default;

    /// Throws UnsupportedMode, Transport, Timeout, MalformedResponse or BackendFailure.
    virtual SegmentationResult segment(const RasterImage& image, const PromptBundle& prompt) = 0;
    virtual std::string id() const = 0;
    virtual bool supports(PromptMode mode) const = 0;
};

/// Throws UnsupportedMode unless `backend` accepts `mode`.
void require_mode(const SegmentationBackend& backend, PromptMode mode);

// ---------------------------------------------------------------------------
// Wire protocol: POST /v1/segment

/// Request body without "request_id"; the canonical content the digest covers.
nlohmann::json wire_request_body(const RasterImage& image, const PromptBundle& prompt);
/// sha256 of the canonical request body.
std::string request_digest(const nlohmann::json& body);
/// Content-derived RFC 4122 style id (version nibble 5). Identical requests share ids,
/// which is what makes retries idempotent.
std::string request_id_for(const std::string& digest);

/// Validates and decodes a 200 response body against the request image extent.
/// Throws MalformedResponse.
SegmentationResult parse_wire_response(const nlohmann::json& body, int width, int height);
nlohmann::json wire_response(const SegmentationResult& result);

/// Server-side helpers for implementing the protocol.
RasterImage image_from_wire(const nlohmann::json& image);

// ---------------------------------------------------------------------------

/// Bounds concurrent in-flight calls.
class InFlightLimiter {
  public:
    explicit InFlightLimiter(int limit) : limit_(limit < 1 ? 1 : limit) {}
    void acquire();
    void release();

  private:
    std::mutex mu_;
    std::condition_variable cv_;
    int limit_;
    int active_ = 0;
};

struct RemoteOptions {
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{100};
    std::chrono::milliseconds backoff_cap{2000};
    int max_in_flight = 4;
    std::set<PromptMode> modes{PromptMode::Text, PromptMode::TextBox, PromptMode::Box};
};

/// HTTP client for model servers speaking the /v1/segment protocol. Retries
/// transport failures, 429 and 5xx with capped exponential backoff.
class RemoteBackend : public SegmentationBackend {
  public:
    /// `endpoint` is a base URL such as "http://127.0.0.1:8080".
    RemoteBackend(std::string endpoint, RemoteOptions options = {});

    SegmentationResult segment(const RasterImage& image, const PromptBundle& prompt) override;
    std::string id() const override { return "remote:" + endpoint_; }
    bool supports(PromptMode mode) const override { return options_.modes.contains(mode); }

    /// Posts a prepared body; exposed for idempotence tests.
    nlohmann::json post_segment(const nlohmann::json& body_with_id);

  private:
    std::string endpoint_;
    RemoteOptions options_;
    InFlightLimiter limiter_;
};

/// One line of a fixture file.
struct FixtureRecord {
    std::string request_digest;
    nlohmann::json response;
};

/// Answers from recorded (request digest -> response) pairs; never touches the network.
class ReplayBackend : public SegmentationBackend {
  public:
    explicit ReplayBackend(const std::filesystem::path& fixture_path,
                           std::string id = "replay");
    explicit ReplayBackend(const std::vector<FixtureRecord>& records, std::string id = "replay");

    SegmentationResult segment(const RasterImage& image, const PromptBundle& prompt) override;
    std::string id() const override { return id_; }
    bool supports(PromptMode) const override { return true; }
    std::size_t size() const noexcept { return responses_.size(); }

  private:
    std::string id_;
    std::map<std::string, nlohmann::json> responses_;
};

/// Forwards to an inner backend and appends each exchange to a JSON-lines fixture.
class RecordingBackend : public SegmentationBackend {
  public:
    RecordingBackend(std::shared_ptr<SegmentationBackend> inner, std::filesystem::path fixture_path);

    SegmentationResult segment(const RasterImage& image, const PromptBundle& prompt) override;
    std::string id() const override { return inner_->id(); }
    bool supports(PromptMode mode) const override { return inner_->supports(mode); }

  private:
    std::shared_ptr<SegmentationBackend> inner_;
    std::filesystem::path path_;
    std::mutex mu_;
};

std::vector<FixtureRecord> load_fixture(const std::filesystem::path& path);

} // namespace conceptseg
