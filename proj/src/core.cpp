#include "conceptseg/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace conceptseg {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::MalformedEncoding: return "malformed-encoding";
    case ErrorCode::InvalidPhrase: return "invalid-phrase";
    case ErrorCode::InvalidPrompt: return "invalid-prompt";
    case ErrorCode::NoTarget: return "no-target";
    case ErrorCode::SchemaViolation: return "schema-violation";
    case ErrorCode::MissingFile: return "missing-file";
    case ErrorCode::DuplicateCase: return "duplicate-case";
    case ErrorCode::AlignmentError: return "alignment-error";
    case ErrorCode::SplitAlreadyAssigned: return "split-already-assigned";
    case ErrorCode::UnknownDataset: return "unknown-dataset";
    case ErrorCode::RegistryMiss: return "registry-miss";
    case ErrorCode::InfeasiblePacking: return "infeasible-packing";
    case ErrorCode::UnsupportedMode: return "unsupported-mode";
    case ErrorCode::Transport: return "transport";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::MalformedResponse: return "malformed-response";
    case ErrorCode::BackendFailure: return "backend-failure";
    case ErrorCode::ReplayMiss: return "replay-miss";
    case ErrorCode::ActionParse: return "action-parse";
    case ErrorCode::EmptyGroup: return "empty-group";
    case ErrorCode::DatasetMismatch: return "dataset-mismatch";
    case ErrorCode::CaseSetMismatch: return "case-set-mismatch";
    case ErrorCode::Io: return "io";
    }
    return "unknown";
}

namespace {

void check_extent(int width, int height) {
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::InvalidArgument, "raster extent must be at least 1x1, got " +
                                                    std::to_string(width) + "x" +
                                                    std::to_string(height));
    }
}

std::size_t pixel_count(int width, int height) {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
}

} // namespace

RasterImage::RasterImage(int width, int height, int channels, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
    check_extent(width, height);
    if (channels != 1 && channels != 3) {
        throw Error(ErrorCode::InvalidArgument, "channels must be 1 or 3");
    }
    if (pixels_.size() != pixel_count(width, height) * static_cast<std::size_t>(channels)) {
        throw Error(ErrorCode::DimensionMismatch, "pixel buffer length does not match extent");
    }
}

RasterImage::RasterImage(int width, int height, int channels, std::uint8_t fill)
    : RasterImage(width, height, channels,
                  std::vector<std::uint8_t>(pixel_count(std::max(width, 0), std::max(height, 0)) *
                                                static_cast<std::size_t>(std::max(channels, 0)),
                                            fill)) {}

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
    check_extent(width, height);
    bits_.assign(pixel_count(width, height), 0);
}

BinaryMask::BinaryMask(int width, int height, std::span<const std::uint8_t> bits)
    : BinaryMask(width, height) {
    if (bits.size() != bits_.size()) {
        throw Error(ErrorCode::DimensionMismatch, "mask buffer length does not match extent");
    }
    std::transform(bits.begin(), bits.end(), bits_.begin(),
                   [](std::uint8_t b) { return static_cast<std::uint8_t>(b != 0); });
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void BoxPrompt::validate(int width, int height) const {
    if (x_min < 0 || y_min < 0 || x_min > x_max || y_min > y_max || x_max >= width ||
        y_max >= height) {
        throw Error(ErrorCode::InvalidPrompt,
                    "box (" + std::to_string(x_min) + "," + std::to_string(y_min) + "," +
                        std::to_string(x_max) + "," + std::to_string(y_max) +
                        ") outside image " + std::to_string(width) + "x" +
                        std::to_string(height));
    }
}

BinaryMask box_to_mask(const BoxPrompt& box, int width, int height) {
    box.validate(width, height);
    BinaryMask mask(width, height);
    for (int y = box.y_min; y <= box.y_max; ++y) {
        for (int x = box.x_min; x <= box.x_max; ++x) {
            mask.set(x, y);
        }
    }
    return mask;
}

nlohmann::json box_to_json(const BoxPrompt& box) {
    return {{"x_min", box.x_min},
            {"y_min", box.y_min},
            {"x_max", box.x_max},
            {"y_max", box.y_max},
            {"coords", "inclusive-pixel"}};
}

BoxPrompt box_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw Error(ErrorCode::InvalidPrompt, "box must be a JSON object");
    }
    if (j.contains("coords") && j.at("coords") != "inclusive-pixel") {
        throw Error(ErrorCode::InvalidPrompt, "unsupported box coordinate convention");
    }
    BoxPrompt box;
    try {
        box.x_min = j.at("x_min").get<int>();
        box.y_min = j.at("y_min").get<int>();
        box.x_max = j.at("x_max").get<int>();
        box.y_max = j.at("y_max").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidPrompt, std::string("box fields: ") + e.what());
    }
    return box;
}

RleMask encode_rle(const BinaryMask& mask) {
    RleMask rle{mask.width(), mask.height(), {}};
    const auto bits = mask.bits();
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (auto b : bits) {
        if (b != current) {
            rle.runs.push_back(run);
            run = 0;
            current = b;
        }
        ++run;
    }
    rle.runs.push_back(run);
    return rle;
}

BinaryMask decode_rle(const RleMask& rle) {
    if (rle.width < 1 || rle.height < 1) {
        throw Error(ErrorCode::MalformedEncoding, "RLE extent must be at least 1x1");
    }
    if (rle.runs.empty()) {
        throw Error(ErrorCode::MalformedEncoding, "RLE has no runs");
    }
    const auto total = pixel_count(rle.width, rle.height);
    std::size_t sum = 0;
    for (std::size_t i = 0; i < rle.runs.size(); ++i) {
        if (i > 0 && rle.runs[i] == 0) {
            throw Error(ErrorCode::MalformedEncoding,
                        "zero-length run at position " + std::to_string(i));
        }
        sum += rle.runs[i];
    }
    if (sum != total) {
        throw Error(ErrorCode::MalformedEncoding, "run sum " + std::to_string(sum) +
                                                      " != " + std::to_string(total));
    }
    BinaryMask mask(rle.width, rle.height);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < rle.runs.size(); ++i) {
        if (i % 2 == 1) {
            for (std::size_t k = 0; k < rle.runs[i]; ++k) {
                mask.set(pos + k);
            }
        }
        pos += rle.runs[i];
    }
    return mask;
}

nlohmann::json rle_to_json(const RleMask& rle) {
    return {{"w", rle.width}, {"h", rle.height}, {"runs", rle.runs}};
}

RleMask rle_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("w") || !j.contains("h") || !j.contains("runs") ||
        !j.at("runs").is_array()) {
        throw Error(ErrorCode::MalformedEncoding, "RLE JSON must be {\"w\",\"h\",\"runs\"}");
    }
    RleMask rle;
    try {
        rle.width = j.at("w").get<int>();
        rle.height = j.at("h").get<int>();
        for (const auto& r : j.at("runs")) {
            if (!r.is_number_integer() || r.get<std::int64_t>() < 0 ||
                r.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
                throw Error(ErrorCode::MalformedEncoding, "runs must be non-negative integers");
            }
            rle.runs.push_back(r.get<std::uint32_t>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedEncoding, e.what());
    }
    return rle;
}

RasterImage overlay(const RasterImage& image, const BinaryMask& mask, double alpha,
                    const std::array<std::uint8_t, 3>& highlight) {
    if (image.width() != mask.width() || image.height() != mask.height()) {
        throw Error(ErrorCode::DimensionMismatch, "overlay mask does not match image");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "overlay alpha must lie in [0, 1]");
    }
    const int channels = image.channels();
    std::array<double, 3> target{};
    if (channels == 3) {
        target = {double(highlight[0]), double(highlight[1]), double(highlight[2])};
    } else {
        target[0] = std::round(0.299 * highlight[0] + 0.587 * highlight[1] + 0.114 * highlight[2]);
    }
    const auto src = image.pixels();
    std::vector<std::uint8_t> out(src.begin(), src.end());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask.test(i)) {
            continue;
        }
        for (int c = 0; c < channels; ++c) {
            const auto idx = i * channels + c;
            const double v = (1.0 - alpha) * src[idx] + alpha * target[c];
            out[idx] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return RasterImage(image.width(), image.height(), channels, std::move(out));
}

RasterImage to_rgb(const RasterImage& image) {
    if (image.channels() == 3) {
        return image;
    }
    const auto src = image.pixels();
    std::vector<std::uint8_t> out;
    out.reserve(src.size() * 3);
    for (auto v : src) {
        out.insert(out.end(), {v, v, v});
    }
    return RasterImage(image.width(), image.height(), 3, std::move(out));
}

RasterImage mask_to_image(const BinaryMask& mask) {
    std::vector<std::uint8_t> out(mask.size());
    const auto bits = mask.bits();
    std::transform(bits.begin(), bits.end(), out.begin(),
                   [](std::uint8_t b) { return static_cast<std::uint8_t>(b ? 255 : 0); });
    return RasterImage(mask.width(), mask.height(), 1, std::move(out));
}

BinaryMask image_to_mask(const RasterImage& image) {
    BinaryMask mask(image.width(), image.height());
    const auto src = image.pixels();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (src[i * image.channels()] != 0) {
            mask.set(i);
        }
    }
    return mask;
}

} // namespace conceptseg
