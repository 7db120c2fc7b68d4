#pragma once

#include "conceptseg/backend.hpp"

#include <httplib.h>

#include <atomic>
#include <functional>
#include <thread>

namespace testutil {

/// Serves POST /v1/segment on 127.0.0.1 from an in-process handler.
class WireServer {
  public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    explicit WireServer(Handler handler) {
        server_.Post("/v1/segment", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++requests_;
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    /// Answers every request from `backend` following the wire protocol.
    static Handler serving(conceptseg::SegmentationBackend& backend) {
        return [&backend](const httplib::Request& req, httplib::Response& res) {
            try {
                const auto body = nlohmann::json::parse(req.body);
                const auto image = conceptseg::image_from_wire(body.at("image"));
                const auto prompt = conceptseg::PromptBundle::from_json(body.at("prompt"));
                auto out = conceptseg::wire_response(backend.segment(image, prompt));
                out["request_id"] = body.at("request_id");
                res.set_content(out.dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
            }
        };
    }

    ~WireServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int requests() const { return requests_; }

  private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> requests_{0};
};

} // namespace testutil
