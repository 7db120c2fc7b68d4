#pragma once

#include "conceptseg/error.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace conceptseg {

/// 8-bit row-major raster with 1 (gray) or 3 (RGB) interleaved channels.
class RasterImage {
  public:
    RasterImage(int width, int height, int channels, std::vector<std::uint8_t> pixels);
    /// Uniformly filled image.
    RasterImage(int width, int height, int channels, std::uint8_t fill = 0);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }

    std::uint8_t at(int x, int y, int c = 0) const {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

  private:
    int width_;
    int height_;
    int channels_;
    std::vector<std::uint8_t> pixels_;
};

/// Single-target binary mask; one byte per pixel holding 0 or 1.
class BinaryMask {
  public:
    BinaryMask(int width, int height);
    /// Any nonzero byte in `bits` counts as foreground.
    BinaryMask(int width, int height, std::span<const std::uint8_t> bits);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool test(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    bool test(std::size_t index) const { return bits_[index] != 0; }
    void set(int x, int y, bool value = true) {
        bits_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
    }
    void set(std::size_t index, bool value = true) { bits_[index] = value ? 1 : 0; }

    std::span<const std::uint8_t> bits() const noexcept { return bits_; }
    std::size_t count() const noexcept;
    bool empty() const noexcept { return count() == 0; }
    bool same_shape(const BinaryMask& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

  private:
    int width_;
    int height_;
    std::vector<std::uint8_t> bits_;
};

/// Axis-aligned box with inclusive pixel coordinates.
struct BoxPrompt {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    int box_width() const noexcept { return x_max - x_min + 1; }
    int box_height() const noexcept { return y_max - y_min + 1; }
    std::size_t area() const noexcept {
        return static_cast<std::size_t>(box_width()) * static_cast<std::size_t>(box_height());
    }
    bool contains(int x, int y) const noexcept {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }
    /// Throws InvalidPrompt unless 0 <= min <= max < extent on both axes.
    void validate(int width, int height) const;

    friend bool operator==(const BoxPrompt&, const BoxPrompt&) = default;
};

BinaryMask box_to_mask(const BoxPrompt& box, int width, int height);

nlohmann::json box_to_json(const BoxPrompt& box);
BoxPrompt box_from_json(const nlohmann::json& j);

/// Row-major run lengths alternating background/foreground, starting with background.
struct RleMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> runs;

    friend bool operator==(const RleMask&, const RleMask&) = default;
};

RleMask encode_rle(const BinaryMask& mask);
/// Throws MalformedEncoding when runs do not sum to width*height or are not canonical.
BinaryMask decode_rle(const RleMask& rle);

/// {"w":int,"h":int,"runs":[...]}
nlohmann::json rle_to_json(const RleMask& rle);
RleMask rle_from_json(const nlohmann::json& j);

struct OverlayStyle {
    std::array<std::uint8_t, 3> highlight{255, 0, 0};
    double alpha = 0.5;
};

/// Blends foreground pixels toward the highlight color:
/// out = round((1 - alpha) * in + alpha * highlight). Background pixels are copied.
/// Gray images blend toward the highlight's luma (0.299 R + 0.587 G + 0.114 B).
RasterImage overlay(const RasterImage& image, const BinaryMask& mask, double alpha,
                    const std::array<std::uint8_t, 3>& highlight = OverlayStyle{}.highlight);

RasterImage to_rgb(const RasterImage& image);

/// Mask rendered as an 8-bit gray image, foreground 255.
RasterImage mask_to_image(const BinaryMask& mask);
/// Nonzero in channel 0 becomes foreground.
BinaryMask image_to_mask(const RasterImage& image);

} // namespace conceptseg
