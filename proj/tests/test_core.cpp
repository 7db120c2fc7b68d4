#include "conceptseg/codec.hpp"
#include "conceptseg/core.hpp"
#include "conceptseg/rng.hpp"
#include "helpers.hpp"

#include <doctest.h>

using namespace conceptseg;
using testutil::mask_from_rows;

TEST_SUITE("core") {

TEST_CASE("raster image rejects inconsistent buffers") {
    CHECK_THROWS_AS(RasterImage(2, 2, 1, std::vector<std::uint8_t>(3)), Error);
    CHECK_THROWS_AS(RasterImage(0, 2, 1), Error);
    CHECK_THROWS_AS(RasterImage(2, 2, 2), Error);
    RasterImage img(3, 2, 3, std::uint8_t{7});
    CHECK(img.pixels().size() == 18);
    CHECK(img.at(2, 1, 2) == 7);
}

TEST_CASE("box prompts use inclusive pixel corners") {
    const BoxPrompt box{1, 2, 3, 2};
    CHECK(box.box_width() == 3);
    CHECK(box.box_height() == 1);
    CHECK(box.area() == 3);
    const auto m = box_to_mask(box, 5, 4);
    CHECK(m.count() == 3);
    CHECK(m.test(1, 2));
    CHECK(m.test(3, 2));
    CHECK_FALSE(m.test(4, 2));
    CHECK_NOTHROW(box.validate(5, 4));
    CHECK_THROWS_AS(box.validate(3, 4), Error);
    CHECK_THROWS_AS((BoxPrompt{2, 0, 1, 0}).validate(5, 5), Error);

    const auto j = box_to_json(box);
    CHECK(j.at("coords") == "inclusive-pixel");
    CHECK(box_from_json(j) == box);
}

TEST_CASE("rle of a small mask") {
    const auto m = mask_from_rows({"..#", "##."});
    const auto rle = encode_rle(m);
    CHECK(rle.runs == std::vector<std::uint32_t>{2, 3, 1});
    CHECK(decode_rle(rle) == m);

    const auto starts_fg = mask_from_rows({"#.", ".."});
    CHECK(encode_rle(starts_fg).runs == std::vector<std::uint32_t>{0, 1, 3});

    const BinaryMask empty(4, 3);
    CHECK(encode_rle(empty).runs == std::vector<std::uint32_t>{12});
}

TEST_CASE("rle decoding rejects malformed runs") {
    CHECK_THROWS_AS(decode_rle(RleMask{2, 2, {1, 1}}), Error);          // sums to 2, not 4
    CHECK_THROWS_AS(decode_rle(RleMask{2, 2, {1, 0, 3}}), Error);       // interior zero
    CHECK_THROWS_AS(decode_rle(RleMask{2, 2, {4, 0}}), Error);          // trailing zero
    CHECK_THROWS_AS(decode_rle(RleMask{2, 2, {}}), Error);
    try {
        decode_rle(RleMask{2, 2, {1, 1}});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MalformedEncoding);
    }
}

TEST_CASE("rle round trip on random masks and json") {
    DeterministicRng rng(11);
    for (int i = 0; i < 200; ++i) {
        const int w = static_cast<int>(rng.uniform_int(1, 20));
        const int h = static_cast<int>(rng.uniform_int(1, 20));
        const auto m = testutil::random_mask(rng, w, h, rng.uniform01());
        const auto rle = encode_rle(m);
        std::uint64_t sum = 0;
        for (auto r : rle.runs) {
            sum += r;
        }
        CHECK(sum == static_cast<std::uint64_t>(w) * h);
        CHECK(decode_rle(rle_from_json(rle_to_json(rle))) == m);
    }
}

TEST_CASE("overlay blends masked pixels only") {
    RasterImage rgb(2, 1, 3, std::vector<std::uint8_t>{100, 100, 100, 10, 20, 30});
    BinaryMask m(2, 1);
    m.set(0, 0);
    const auto out = overlay(rgb, m, 0.5);
    // 0.5*100 + 0.5*255 = 177.5 rounds away from zero.
    CHECK(out.at(0, 0, 0) == 178);
    CHECK(out.at(0, 0, 1) == 50);
    CHECK(out.at(0, 0, 2) == 50);
    CHECK(out.at(1, 0, 0) == 10);
    CHECK(out.at(1, 0, 2) == 30);
    CHECK(overlay(rgb, m, 0.0) == rgb);
    CHECK(overlay(rgb, m, 1.0).at(0, 0, 0) == 255);
    CHECK_THROWS_AS(overlay(rgb, m, 1.5), Error);
    CHECK_THROWS_AS(overlay(rgb, BinaryMask(3, 1), 0.5), Error);
}

TEST_CASE("overlay on gray images keeps one channel") {
    RasterImage gray(1, 1, 1, std::uint8_t{0});
    BinaryMask m(1, 1);
    m.set(0, 0);
    const auto out = overlay(gray, m, 1.0);
    CHECK(out.channels() == 1);
    CHECK(out.at(0, 0) == 76);  // luma of pure red
    CHECK(to_rgb(gray).channels() == 3);
}

TEST_CASE("mask and image conversions") {
    const auto m = mask_from_rows({"#.", ".#"});
    const auto img = mask_to_image(m);
    CHECK(img.at(0, 0) == 255);
    CHECK(img.at(1, 0) == 0);
    CHECK(image_to_mask(img) == m);
}

} // TEST_SUITE

TEST_SUITE("codec") {

TEST_CASE("png round trip for gray and rgb") {
    DeterministicRng rng(3);
    std::vector<std::uint8_t> px(5 * 4 * 3);
    for (auto& p : px) {
        p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    }
    const RasterImage rgb(5, 4, 3, px);
    CHECK(decode_png(encode_png(rgb)) == rgb);
    const RasterImage gray(5, 4, 1, std::vector<std::uint8_t>(px.begin(), px.begin() + 20));
    CHECK(decode_png(encode_png(gray)) == gray);
    CHECK_THROWS_AS(decode_png(std::vector<std::uint8_t>{1, 2, 3}), Error);
}

TEST_CASE("sha256 and base64 known answers") {
    CHECK(sha256_hex(std::string_view("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const std::vector<std::uint8_t> bytes{'f', 'o', 'o', 'b', 'a'};
    CHECK(base64_encode(bytes) == "Zm9vYmE=");
    CHECK(base64_decode("Zm9vYmE=") == bytes);
    CHECK(base64_decode("") .empty());
    CHECK_THROWS_AS(base64_decode("Zm9v!"), Error);
}

TEST_CASE("files") {
    testutil::TempDir dir("codec");
    write_file_atomic(dir / "a.txt", "hello");
    CHECK(read_text_file(dir / "a.txt") == "hello");
    CHECK_THROWS_AS(read_text_file(dir / "missing.txt"), Error);
    const auto m = mask_from_rows({"#..", ".##"});
    write_mask_png(dir / "m.png", m);
    CHECK(read_mask_png(dir / "m.png") == m);
}

} // TEST_SUITE

TEST_SUITE("rng") {

TEST_CASE("deterministic and in range") {
    DeterministicRng a(42);
    DeterministicRng b(42);
    for (int i = 0; i < 100; ++i) {
        const auto v = a.uniform_int(-3, 3);
        CHECK(v == b.uniform_int(-3, 3));
        CHECK(v >= -3);
        CHECK(v <= 3);
    }
    // FNV-1a 64 reference values.
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

} // TEST_SUITE
