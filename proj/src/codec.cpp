#include "conceptseg/codec.hpp"

#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include <openssl/evp.h>
#include <png.h>

namespace conceptseg {

namespace {

struct PngImageGuard {
    png_image image{};
    PngImageGuard() {
        image.version = PNG_IMAGE_VERSION;
    }
    ~PngImageGuard() { png_image_free(&image); }
    PngImageGuard(const PngImageGuard&) = delete;
    PngImageGuard& operator=(const PngImageGuard&) = delete;
};

} // namespace

std::vector<std::uint8_t> encode_png(const RasterImage& image) {
    PngImageGuard guard;
    guard.image.width = static_cast<png_uint_32>(image.width());
    guard.image.height = static_cast<png_uint_32>(image.height());
    guard.image.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    const auto pixels = image.pixels();
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&guard.image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
        throw Error(ErrorCode::Io, std::string("PNG encode failed: ") + guard.image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&guard.image, out.data(), &size, 0, pixels.data(), 0,
                                   nullptr)) {
        throw Error(ErrorCode::Io, std::string("PNG encode failed: ") + guard.image.message);
    }
    out.resize(size);
    return out;
}

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
    PngImageGuard guard;
    if (!png_image_begin_read_from_memory(&guard.image, bytes.data(), bytes.size())) {
        throw Error(ErrorCode::Io, std::string("PNG decode failed: ") + guard.image.message);
    }
    const bool color = (guard.image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    guard.image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int channels = color ? 3 : 1;
    const int width = static_cast<int>(guard.image.width);
    const int height = static_cast<int>(guard.image.height);
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * height * channels);
    // Alpha composites over black.
    png_color background{0, 0, 0};
    if (!png_image_finish_read(&guard.image, &background, pixels.data(), 0, nullptr)) {
        throw Error(ErrorCode::Io, std::string("PNG decode failed: ") + guard.image.message);
    }
    return RasterImage(width, height, channels, std::move(pixels));
}

RasterImage read_png(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_png(bytes);
    } catch (const Error& e) {
        throw Error(ErrorCode::Io, path.string() + ": " + e.what());
    }
}

void write_png(const std::filesystem::path& path, const RasterImage& image) {
    const auto bytes = encode_png(image);
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                             bytes.size()));
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
    return image_to_mask(read_png(path));
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
    write_png(path, mask_to_image(mask));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::Io, "sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) {
        throw Error(ErrorCode::MalformedEncoding, "base64 length is not a multiple of 4");
    }
    std::vector<std::uint8_t> out(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) {
        throw Error(ErrorCode::MalformedEncoding, "invalid base64");
    }
    // EVP_DecodeBlock keeps the bytes produced by '=' padding.
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') {
        ++pad;
        if (text.size() > 1 && text[text.size() - 2] == '=') {
            ++pad;
        }
    }
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) {
            throw Error(ErrorCode::Io, "short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace conceptseg
