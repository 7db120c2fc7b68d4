#include "conceptseg/backend.hpp"

#include <httplib.h>

#include <algorithm>
#include <thread>

namespace conceptseg {

using nlohmann::json;

RemoteBackend::RemoteBackend(std::string endpoint, RemoteOptions options)
    : endpoint_(std::move(endpoint)), options_(std::move(options)),
      limiter_(options_.max_in_flight) {
    while (!endpoint_.empty() && endpoint_.back() == '/') {
        endpoint_.pop_back();
    }
}

namespace {

struct LimiterLease {
    InFlightLimiter& limiter;
    explicit LimiterLease(InFlightLimiter& l) : limiter(l) { limiter.acquire(); }
    ~LimiterLease() { limiter.release(); }
};

bool retryable_status(int status) { return status == 429 || status >= 500; }

} // namespace

json RemoteBackend::post_segment(const json& body_with_id) {
    LimiterLease lease(limiter_);
    const auto payload = body_with_id.dump();
    const auto timeout_us =
        std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout).count();

    std::string last_error;
    ErrorCode last_code = ErrorCode::Transport;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            const auto delay = std::min<std::chrono::milliseconds>(
                options_.backoff_cap, options_.backoff_base * (1LL << std::min(attempt - 1, 20)));
            std::this_thread::sleep_for(delay);
        }
        httplib::Client client(endpoint_);
        client.set_connection_timeout(timeout_us / 1000000, timeout_us % 1000000);
        client.set_read_timeout(timeout_us / 1000000, timeout_us % 1000000);
        client.set_write_timeout(timeout_us / 1000000, timeout_us % 1000000);

        const auto started = std::chrono::steady_clock::now();
        auto res = client.Post("/v1/segment", payload, "application/json");
        if (!res) {
            const auto elapsed = std::chrono::steady_clock::now() - started;
            const bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                                   (res.error() == httplib::Error::Read &&
                                    elapsed >= options_.timeout * 9 / 10);
            last_code = timed_out ? ErrorCode::Timeout : ErrorCode::Transport;
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) {
            try {
                return json::parse(res->body);
            } catch (const json::parse_error& e) {
                throw Error(ErrorCode::MalformedResponse, std::string("response body: ") + e.what());
            }
        }
        std::string message = "HTTP " + std::to_string(res->status);
        try {
            const auto err = json::parse(res->body);
            if (err.contains("error") && err.at("error").is_string()) {
                message += ": " + err.at("error").get<std::string>();
            }
        } catch (const json::parse_error&) {
        }
        if (!retryable_status(res->status)) {
            throw Error(ErrorCode::BackendFailure, message);
        }
        last_code = ErrorCode::BackendFailure;
        last_error = message;
    }
    throw Error(last_code, endpoint_ + " after " + std::to_string(options_.max_retries + 1) +
                               " attempts: " + last_error);
}

SegmentationResult RemoteBackend::segment(const RasterImage& image, const PromptBundle& prompt) {
    require_mode(*this, prompt.mode());
    auto body = wire_request_body(image, prompt);
    body["request_id"] = request_id_for(request_digest(body));
    const auto started = std::chrono::steady_clock::now();
    auto result = parse_wire_response(post_segment(body), image.width(), image.height());
    result.latency_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - started)
                            .count();
    return result;
}

} // namespace conceptseg
