#include "conceptseg/backend.hpp"

#include "conceptseg/codec.hpp"

#include <fstream>
#include <sstream>

namespace conceptseg {

using nlohmann::json;

void require_mode(const SegmentationBackend& backend, PromptMode mode) {
    if (!backend.supports(mode)) {
        throw Error(ErrorCode::UnsupportedMode, "backend " + backend.id() + " does not accept " +
                                                    std::string(to_string(mode)) + " prompts");
    }
}

json wire_request_body(const RasterImage& image, const PromptBundle& prompt) {
    return {{"image",
             {{"w", image.width()},
              {"h", image.height()},
              {"channels", image.channels()},
              {"png_b64", base64_encode(encode_png(image))}}},
            {"prompt", prompt.to_json()}};
}

std::string request_digest(const json& body) {
    if (body.contains("request_id")) {
        auto copy = body;
        copy.erase("request_id");
        return sha256_hex(copy.dump());
    }
    return sha256_hex(body.dump());
}

std::string request_id_for(const std::string& digest) {
    std::string hex = digest.substr(0, 32);
    hex[12] = '5';
    static constexpr char variant[] = "89ab";
    hex[16] = variant[std::stoi(hex.substr(16, 1), nullptr, 16) & 3];
    return hex.substr(0, 8) + "-" + hex.substr(8, 4) + "-" + hex.substr(12, 4) + "-" +
           hex.substr(16, 4) + "-" + hex.substr(20, 12);
}

SegmentationResult parse_wire_response(const json& body, int width, int height) {
    if (!body.is_object() || !body.contains("mask") || !body.contains("confidence") ||
        !body.at("confidence").is_number()) {
        throw Error(ErrorCode::MalformedResponse,
                    "response needs \"mask\" and numeric \"confidence\"");
    }
    const double confidence = body.at("confidence").get<double>();
    if (!(confidence >= 0.0 && confidence <= 1.0)) {
        throw Error(ErrorCode::MalformedResponse, "confidence outside [0, 1]");
    }
    RleMask rle;
    BinaryMask mask(1, 1);
    try {
        rle = rle_from_json(body.at("mask"));
        mask = decode_rle(rle);
    } catch (const Error& e) {
        throw Error(ErrorCode::MalformedResponse, std::string("mask: ") + e.what());
    }
    if (rle.width != width || rle.height != height) {
        throw Error(ErrorCode::MalformedResponse, "mask extent differs from request image");
    }
    std::string model_id = "unknown";
    if (body.contains("model_id") && body.at("model_id").is_string()) {
        model_id = body.at("model_id").get<std::string>();
    }
    return {std::move(mask), confidence, model_id, 0.0};
}

json wire_response(const SegmentationResult& result) {
    return {{"mask", rle_to_json(encode_rle(result.mask))},
            {"confidence", result.confidence},
            {"model_id", result.backend_id}};
}

RasterImage image_from_wire(const json& image) {
    try {
        auto decoded = decode_png(base64_decode(image.at("png_b64").get<std::string>()));
        if (decoded.width() != image.at("w").get<int>() ||
            decoded.height() != image.at("h").get<int>()) {
            throw Error(ErrorCode::DimensionMismatch, "declared extent differs from PNG");
        }
        return decoded;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("image: ") + e.what());
    }
}

void InFlightLimiter::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
}

void InFlightLimiter::release() {
    {
        std::lock_guard lock(mu_);
        --active_;
    }
    cv_.notify_one();
}

std::vector<FixtureRecord> load_fixture(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::MissingFile, "cannot open fixture " + path.string());
    }
    std::vector<FixtureRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            const auto j = json::parse(line);
            records.push_back({j.at("request_digest").get<std::string>(), j.at("response")});
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaViolation,
                        path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return records;
}

ReplayBackend::ReplayBackend(const std::filesystem::path& fixture_path, std::string id)
    : ReplayBackend(load_fixture(fixture_path), std::move(id)) {}

ReplayBackend::ReplayBackend(const std::vector<FixtureRecord>& records, std::string id)
    : id_(std::move(id)) {
    for (const auto& r : records) {
        responses_[r.request_digest] = r.response;
    }
}

SegmentationResult ReplayBackend::segment(const RasterImage& image, const PromptBundle& prompt) {
    const auto digest = request_digest(wire_request_body(image, prompt));
    const auto it = responses_.find(digest);
    if (it == responses_.end()) {
        throw Error(ErrorCode::ReplayMiss, "no recorded response for request " + digest);
    }
    return parse_wire_response(it->second, image.width(), image.height());
}

RecordingBackend::RecordingBackend(std::shared_ptr<SegmentationBackend> inner,
                                   std::filesystem::path fixture_path)
    : inner_(std::move(inner)), path_(std::move(fixture_path)) {
    if (path_.has_parent_path()) {
        std::filesystem::create_directories(path_.parent_path());
    }
}

SegmentationResult RecordingBackend::segment(const RasterImage& image,
                                             const PromptBundle& prompt) {
    auto result = inner_->segment(image, prompt);
    const json line{{"request_digest", request_digest(wire_request_body(image, prompt))},
                    {"response", wire_response(result)}};
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot append to fixture " + path_.string());
    }
    out << line.dump() << "\n";
    return result;
}

} // namespace conceptseg
