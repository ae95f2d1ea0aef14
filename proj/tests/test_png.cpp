#include <cubeviz/error.hpp>
#include <cubeviz/png_io.hpp>

#include "support/png_oracle.hpp"
#include "support/test_support.hpp"

#include <random>

#include <doctest.h>

using namespace cubeviz;
using testing::TempDir;

namespace {

PngRaster random_raster(std::uint32_t w, std::uint32_t h, int depth, int channels, std::uint64_t seed)
{
    PngRaster r{w, h, depth, channels, {}};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dist(0, (1 << depth) - 1);
    r.samples.resize(std::size_t(w) * h * channels);
    for (auto& s : r.samples) {
        s = static_cast<std::uint16_t>(dist(rng));
    }
    // Smooth rows exercise the non-trivial filter types.
    for (std::uint32_t x = 0; x < w * channels; ++x) {
        r.samples[x] = static_cast<std::uint16_t>(x % (1 << depth));
    }
    return r;
}

} // namespace

TEST_CASE("PNG round trip agrees with an independent decoder")
{
    TempDir dir;
    for (int depth : {8, 16}) {
        for (int channels : {3, 4}) {
            CAPTURE(depth);
            CAPTURE(channels);
            const PngRaster r = random_raster(37, 23, depth, channels, depth * 10 + channels);
            const auto path = dir / "img.png";
            write_png(path, r);

            const PngRaster back = read_png(path);
            CHECK(back.width == r.width);
            CHECK(back.height == r.height);
            CHECK(back.bit_depth == depth);
            CHECK(back.channels == channels);
            CHECK(back.samples == r.samples);

            const testing::DecodedPng oracle = testing::decode_png(path);
            CHECK(oracle.width == r.width);
            CHECK(oracle.height == r.height);
            CHECK(oracle.bit_depth == depth);
            CHECK(oracle.channels == channels);
            CHECK(oracle.samples == r.samples);
        }
    }
}

TEST_CASE("PNG errors")
{
    TempDir dir;
    CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
    testing::write_file(dir / "text.png", "definitely not a png");
    CHECK_THROWS_AS(read_png(dir / "text.png"), FormatError);

    const PngRaster r = random_raster(8, 8, 8, 4, 1);
    write_png(dir / "ok.png", r);
    std::string bytes = testing::read_file(dir / "ok.png");
    testing::write_file(dir / "cut.png", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_png(dir / "cut.png"), FormatError);

    PngRaster bad = r;
    bad.samples.pop_back();
    CHECK_THROWS_AS(write_png(dir / "bad.png", bad), InvalidArgument);
    bad = r;
    bad.bit_depth = 12;
    CHECK_THROWS_AS(write_png(dir / "bad.png", bad), InvalidArgument);
    CHECK_THROWS_AS(write_png(dir / "no" / "such" / "dir.png", r), IoError);
}

TEST_CASE("PNG output is deterministic")
{
    TempDir dir;
    const PngRaster r = random_raster(64, 16, 16, 4, 3);
    write_png(dir / "a.png", r);
    write_png(dir / "b.png", r);
    CHECK(testing::read_file(dir / "a.png") == testing::read_file(dir / "b.png"));
}
