#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "canvas/image_io.hpp"
#include "canvas/rng.hpp"

using namespace canvas;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const char* name)
        : path((std::filesystem::temp_directory_path() / name).string()) {}
    ~TempFile() { std::remove(path.c_str()); }
};

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("one-pixel ppm has the exact canonical byte layout") {
    ImageU8 img(1, 1, 3, 255);
    TempFile tmp("canvas_white.ppm");
    write_ppm(tmp.path, img);

    const std::vector<std::uint8_t> expect = {'P', '6', '\n', '1',  ' ',  '1',
                                              '\n', '2', '5', '5',  '\n', 255,
                                              255,  255};
    REQUIRE(slurp(tmp.path) == expect);
    REQUIRE(images_equal(read_ppm(tmp.path), img));
}

TEST_CASE("ppm round-trip is bit-exact for random pixels") {
    RngStream rng(11, {1});
    ImageU8 img(16, 24, 3);
    for (auto& v : img.data) v = std::uint8_t(rng.uniform_int(256));

    TempFile tmp("canvas_rand.ppm");
    write_ppm(tmp.path, img);
    const ImageU8 back = read_ppm(tmp.path);
    REQUIRE(images_equal(back, img));

    write_ppm(tmp.path, back);
    const auto once = slurp(tmp.path);
    write_ppm(tmp.path, back);
    REQUIRE(slurp(tmp.path) == once);
}

TEST_CASE("pgm round-trip preserves masks") {
    ImageU8 mask(5, 4, 1, 0);
    mask.at(2, 1) = 255;
    mask.at(3, 2) = 255;
    TempFile tmp("canvas_mask.pgm");
    write_pgm(tmp.path, mask);
    const ImageU8 back = read_pgm(tmp.path);
    REQUIRE(images_equal(back, mask));
    REQUIRE(mask_fraction(back) == Catch::Approx(2.0 / 20.0));
}

TEST_CASE("header comments are skipped") {
    TempFile tmp("canvas_comment.ppm");
    spit(tmp.path, {'P', '6', '\n', '#', ' ', 'h', 'i', '\n', '2', ' ', '1', '\n', '2', '5',
                    '5', '\n', 1, 2, 3, 4, 5, 6});
    const ImageU8 img = read_ppm(tmp.path);
    REQUIRE(img.width == 2);
    REQUIRE(img.height == 1);
    REQUIRE(img.at(1, 0, 2) == 6);
}

TEST_CASE("malformed headers report the offending byte offset") {
    TempFile tmp("canvas_bad.ppm");

    SECTION("wrong magic") {
        spit(tmp.path, {'P', '5', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 0, 0, 0});
        try {
            read_ppm(tmp.path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(e.offset() == 0);
        }
    }

    SECTION("non-digit width") {
        spit(tmp.path, {'P', '6', '\n', 'x', '1', '\n', '2', '5', '5', '\n', 0, 0, 0});
        try {
            read_ppm(tmp.path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(e.offset() == 3);
        }
    }

    SECTION("bad maxval") {
        spit(tmp.path, {'P', '6', '\n', '1', ' ', '1', '\n', '2', '5', '4', '\n', 0, 0, 0});
        REQUIRE_THROWS_AS(read_ppm(tmp.path), ParseError);
    }

    SECTION("truncated pixel data points at end of file") {
        spit(tmp.path, {'P', '6', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 9, 9, 9});
        try {
            read_ppm(tmp.path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(e.offset() == 14);
        }
    }

    SECTION("trailing bytes point just past the pixel block") {
        spit(tmp.path,
             {'P', '6', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 9, 9, 9, 7});
        try {
            read_ppm(tmp.path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(e.offset() == 14);
        }
    }

    SECTION("oversized dimensions rejected") {
        spit(tmp.path, {'P', '6', '\n', '9', '9', '9', '9', '9', '9', '9', '9', ' ', '1',
                        '\n', '2', '5', '5', '\n'});
        REQUIRE_THROWS_AS(read_ppm(tmp.path), ParseError);
    }
}

TEST_CASE("binary mask validation") {
    ImageU8 ok(2, 2, 1, 0);
    ok.at(0, 0) = 255;
    REQUIRE_NOTHROW(require_binary_mask(ok));

    ImageU8 gray = ok;
    gray.at(1, 1) = 128;
    REQUIRE_THROWS_AS(require_binary_mask(gray), std::invalid_argument);

    ImageU8 rgb(2, 2, 3, 0);
    REQUIRE_THROWS_AS(require_binary_mask(rgb), std::invalid_argument);
}

TEST_CASE("byte to unit conversion round-trips every value") {
    ImageU8 img(16, 16, 1);
    for (int i = 0; i < 256; ++i) img.data[std::size_t(i)] = std::uint8_t(i);
    const LatentGrid g = image_to_grid(img);
    const ImageU8 back = grid_to_image(g);
    REQUIRE(images_equal(back, img));
}

TEST_CASE("unit_to_u8 clamps and rejects NaN") {
    REQUIRE(unit_to_u8(-0.5f) == 0);
    REQUIRE(unit_to_u8(1.5f) == 255);
    REQUIRE(unit_to_u8(0.0f) == 0);
    REQUIRE(unit_to_u8(1.0f) == 255);
    REQUIRE(unit_to_u8(0.5f) == 128);
    REQUIRE_THROWS_AS(unit_to_u8(std::nanf("")), std::invalid_argument);
}

TEST_CASE("image_to_grid is channel-major") {
    ImageU8 img(2, 1, 3);
    img.at(0, 0, 0) = 255;
    img.at(1, 0, 2) = 255;
    const LatentGrid g = image_to_grid(img);
    REQUIRE(g.at(0, 0, 0) == 1.0f);
    REQUIRE(g.at(0, 0, 1) == 0.0f);
    REQUIRE(g.at(2, 0, 1) == 1.0f);
    REQUIRE(g.at(2, 0, 0) == 0.0f);
}
