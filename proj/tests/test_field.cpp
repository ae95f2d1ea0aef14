#include <cubeviz/error.hpp>
#include <cubeviz/field.hpp>
#include <cubeviz/synthetic.hpp>

#include "support/test_support.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include <doctest.h>
#include <json.hpp>

using namespace cubeviz;
using testing::TempDir;

namespace {

void write_cube(
    const TempDir& dir,
    const std::string& stem,
    nlohmann::json header,
    const std::string& raw)
{
    header["data"] = stem + ".raw";
    testing::write_file(dir / (stem + ".raw"), raw);
    testing::write_file(dir / (stem + ".meta"), header.dump());
}

nlohmann::json header_222(const char* dtype)
{
    return {
        {"name", "v"},
        {"dims", {2, 2, 2}},
        {"spacing", {1.0, 1.0, 1.0}},
        {"origin", {0.0, 0.0, 0.0}},
        {"units", "1"},
        {"dtype", dtype},
    };
}

template <class T>
std::string pack_values(const std::vector<T>& v, bool big_endian = false)
{
    std::string raw(v.size() * sizeof(T), '\0');
    for (std::size_t i = 0; i < v.size(); ++i) {
        char bytes[sizeof(T)];
        std::memcpy(bytes, &v[i], sizeof(T));
        if (big_endian) {
            std::reverse(bytes, bytes + sizeof(T));
        }
        std::memcpy(raw.data() + i * sizeof(T), bytes, sizeof(T));
    }
    return raw;
}

} // namespace

TEST_CASE("load_cube reads little-endian f32 in x-fastest order")
{
    TempDir dir;
    write_cube(dir, "v", header_222("f32"), pack_values(std::vector<float>{0, 1, 2, 3, 4, 5, 6, 7}));
    const ScalarField f = load_cube(dir / "v.meta");
    CHECK(f.name() == "v");
    CHECK(f.values()[7] == 7.0);
    CHECK(f.at(1, 1, 1) == 7.0);
    CHECK(f.at(1, 0, 0) == 1.0);
    CHECK(f.at(0, 1, 0) == 2.0);
    CHECK(f.at(0, 0, 1) == 4.0);
}

TEST_CASE("load_cube handles big-endian f64 and z-fastest order")
{
    TempDir dir;
    auto h = header_222("f64");
    h["endianness"] = "big";
    h["order"] = "z-fastest";
    // z-fastest: index = z + nz*(y + ny*x); store value 100x + 10y + z.
    std::vector<double> stored;
    for (int x = 0; x < 2; ++x) {
        for (int y = 0; y < 2; ++y) {
            for (int z = 0; z < 2; ++z) {
                stored.push_back(100 * x + 10 * y + z);
            }
        }
    }
    write_cube(dir, "v", h, pack_values(stored, true));
    const ScalarField f = load_cube(dir / "v.meta");
    for (int x = 0; x < 2; ++x) {
        for (int y = 0; y < 2; ++y) {
            for (int z = 0; z < 2; ++z) {
                CHECK(f.at(x, y, z) == 100 * x + 10 * y + z);
            }
        }
    }
}

TEST_CASE("load_cube rejects a data file of the wrong size")
{
    TempDir dir;
    write_cube(dir, "v", header_222("f32"), pack_values(std::vector<float>{0, 1, 2, 3, 4, 5, 6}));
    CHECK_THROWS_AS(load_cube(dir / "v.meta"), FormatError);
}

TEST_CASE("load_cube errors")
{
    TempDir dir;
    CHECK_THROWS_AS(load_cube(dir / "missing.meta"), IoError);

    testing::write_file(dir / "bad.meta", "{not json");
    CHECK_THROWS_AS(load_cube(dir / "bad.meta"), FormatError);

    auto h = header_222("f16");
    write_cube(dir, "dt", h, std::string(16, '\0'));
    CHECK_THROWS_AS(load_cube(dir / "dt.meta"), FormatError);

    auto flat = header_222("f64");
    flat["dims"] = {1, 2, 2};
    write_cube(dir, "flat", flat, std::string(32, '\0'));
    CHECK_THROWS_AS(load_cube(dir / "flat.meta"), Error);
}

TEST_CASE("nan policy")
{
    TempDir dir;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    const auto raw = pack_values(std::vector<float>{0, 1, 2, nan, 4, 5, 6, 7});

    write_cube(dir, "rej", header_222("f32"), raw);
    CHECK_THROWS_AS(load_cube(dir / "rej.meta"), FormatError);

    auto h = header_222("f32");
    h["nan_policy"] = "clamp_zero";
    write_cube(dir, "clamp", h, raw);
    const ScalarField f = load_cube(dir / "clamp.meta");
    CHECK(f.values()[3] == 0.0);
    for (int i : {0, 1, 2, 4, 5, 6, 7}) {
        CHECK(f.values()[i] == i);
    }
}

TEST_CASE("save_cube round trip is bit-identical at 64 bits")
{
    TempDir dir;
    const ScalarField f = synthetic::random_field("rho", 32, 1e-26, 1e-22, 7);
    save_cube(f, dir / "rho.meta");
    const ScalarField g = load_cube(dir / "rho.meta");
    CHECK(g.name() == "rho");
    CHECK(g.grid().same_geometry(f.grid()));
    CHECK(g.grid().length_unit == f.grid().length_unit);
    double worst = 0.0;
    for (std::size_t i = 0; i < f.values().size(); ++i) {
        worst = std::max(worst, std::abs(g.values()[i] - f.values()[i]) / std::abs(f.values()[i]));
    }
    CHECK(worst == 0.0);
    CHECK(g.values() == f.values());
}

TEST_CASE("save_cube at f32 stores rounded values")
{
    TempDir dir;
    const ScalarField f = testing::make_field("v", {2, 2, 2}, {0.1, 1, 2, 3, 4, 5, 6, 7});
    save_cube(f, dir / "v.meta", SaveOptions{ElementType::f32, Endianness::big});
    const ScalarField g = load_cube(dir / "v.meta");
    CHECK(g.values()[0] == static_cast<double>(0.1f));
    CHECK(g.values()[7] == 7.0);
}

TEST_CASE("save_cube to an unwritable path leaves no header")
{
    TempDir dir;
    const ScalarField f = testing::make_field("v", {2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
    const auto target = dir / "missing" / "v.meta";
    CHECK_THROWS_AS(save_cube(f, target), IoError);
    CHECK_FALSE(std::filesystem::exists(target));
}

TEST_CASE("ScalarField invariants")
{
    CHECK_THROWS_AS(testing::make_field("v", {2, 2, 2}, {0, 1, 2}), InvalidArgument);
    CHECK_THROWS_AS(
        testing::make_field("v", {2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, std::numeric_limits<double>::infinity()}),
        InvalidArgument);
    CHECK_THROWS_AS(testing::make_field("v", {2, 1, 2}, {0, 1, 2, 3}), InvalidArgument);
}

TEST_CASE("field_stats")
{
    SUBCASE("constant")
    {
        const ScalarField f = testing::make_field("c", {2, 2, 2}, std::vector<double>(8, 3.0));
        const FieldStats s = field_stats(f);
        CHECK(s.min == 3.0);
        CHECK(s.max == 3.0);
        CHECK(s.mean == 3.0);
        CHECK(*s.positive_min == 3.0);
        std::size_t nonzero = 0;
        for (auto c : s.histogram) {
            nonzero += c != 0;
        }
        CHECK(nonzero == 1);
    }
    SUBCASE("small values")
    {
        const ScalarField f = testing::make_field("v", {2, 2, 2}, {0, 1, 2, 3, 0, 1, 2, 3});
        const FieldStats s = field_stats(f);
        CHECK(s.mean == 1.5);
        CHECK(*s.positive_min == 1.0);
        CHECK(s.histogram.front() == 2);
        CHECK(s.histogram.back() == 2);
    }
    SUBCASE("no positive values")
    {
        const ScalarField f = testing::make_field("v", {2, 2, 2}, std::vector<double>(8, -1.0));
        CHECK_FALSE(field_stats(f).positive_min.has_value());
    }
    SUBCASE("random field against compensated re-summation")
    {
        const ScalarField f = synthetic::random_field("r", 16, -1.0, 3.0, 11);
        const FieldStats s = field_stats(f);
        // Kahan-Babuska with long double accumulation.
        long double sum = 0.0L;
        long double comp = 0.0L;
        for (double v : f.values()) {
            const long double t = sum + v;
            comp += std::fabs(sum) >= std::fabs(static_cast<long double>(v)) ? (sum - t) + v : (v - t) + sum;
            sum = t;
        }
        const double mean = static_cast<double>((sum + comp) / f.values().size());
        CHECK(std::abs(s.mean - mean) <= 1e-12 * std::abs(mean));
        std::size_t total = 0;
        for (auto c : s.histogram) {
            total += c;
        }
        CHECK(total == f.values().size());
        CHECK(s.min <= s.mean);
        CHECK(s.mean <= s.max);
    }
}

TEST_CASE("downsample")
{
    SUBCASE("constant")
    {
        const ScalarField f = testing::make_field("c", {4, 4, 4}, std::vector<double>(64, 2.5));
        const ScalarField d = downsample(f, 2);
        CHECK(d.dims() == Index3{2, 2, 2});
        CHECK(d.grid().spacing == Vec3{2.0, 2.0, 2.0});
        for (double v : d.values()) {
            CHECK(v == 2.5);
        }
    }
    SUBCASE("output below two voxels")
    {
        const ScalarField f = testing::make_field("v", {2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
        CHECK_THROWS_AS(downsample(f, 2), InvalidArgument);
    }
    SUBCASE("non-divisible extents")
    {
        const ScalarField f = testing::make_field("v", {6, 4, 4}, std::vector<double>(96, 1.0));
        CHECK_THROWS_AS(downsample(f, 4), InvalidArgument);
    }
    SUBCASE("ramp against brute-force block averages")
    {
        Grid g;
        g.dims = {8, 8, 8};
        g.spacing = {0.5, 0.25, 2.0};
        g.origin = {1.0, -2.0, 3.0};
        const ScalarField f = testing::field_from("ramp", g, [](double x, double, double) { return x; });
        const ScalarField d = downsample(f, 2);
        CHECK(d.grid().origin == g.origin);
        CHECK(d.grid().spacing == Vec3{1.0, 0.5, 4.0});
        for (std::size_t z = 0; z < 4; ++z) {
            for (std::size_t y = 0; y < 4; ++y) {
                for (std::size_t x = 0; x < 4; ++x) {
                    double sum = 0.0;
                    for (int k = 0; k < 8; ++k) {
                        sum += f.at(2 * x + (k & 1), 2 * y + ((k >> 1) & 1), 2 * z + (k >> 2));
                    }
                    CHECK(d.at(x, y, z) == doctest::Approx(sum / 8).epsilon(1e-14));
                    // The block mean of a ramp is the ramp at the block center.
                    CHECK(d.at(x, y, z) == doctest::Approx(d.grid().voxel_center(x, y, z)[0]).epsilon(1e-14));
                }
            }
        }
    }
    SUBCASE("global mean is preserved")
    {
        const ScalarField f = synthetic::random_field("r", 24, 0.0, 1.0, 5);
        for (std::size_t factor : {2u, 3u, 4u}) {
            const ScalarField d = downsample(f, factor);
            CHECK(field_stats(d).mean == doctest::Approx(field_stats(f).mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("sample_trilinear")
{
    Grid g;
    g.dims = {5, 4, 6};
    g.spacing = {0.5, 1.0, 0.25};
    g.origin = {-1.0, 2.0, 0.0};

    SUBCASE("voxel centers and midpoints")
    {
        const ScalarField f = synthetic::random_field("r", 4, 0.0, 1.0, 3);
        for (std::size_t i = 0; i < 4; ++i) {
            const auto c = f.grid().voxel_center(i, 2, 1);
            CHECK(*sample_trilinear(f, c) == f.at(i, 2, 1));
        }
        const auto a = f.grid().voxel_center(1, 1, 1);
        const auto b = f.grid().voxel_center(2, 1, 1);
        const Vec3 mid{(a[0] + b[0]) / 2, a[1], a[2]};
        CHECK(*sample_trilinear(f, mid) == doctest::Approx((f.at(1, 1, 1) + f.at(2, 1, 1)) / 2));
    }

    SUBCASE("two voxels valued 0 and 1")
    {
        const ScalarField f = testing::make_field("v", {2, 2, 2}, {0, 1, 0, 1, 0, 1, 0, 1});
        CHECK(*sample_trilinear(f, {1.0, 0.5, 0.5}) == 0.5);
    }

    SUBCASE("exact on trilinear functions")
    {
        auto fn = [](double x, double y, double z) { return 2 * x + 3 * y + z + 0.5 * x * y * z; };
        const ScalarField f = testing::field_from("t", g, fn);
        std::mt19937_64 rng(17);
        const auto lo = g.voxel_center(0, 0, 0);
        const auto hi = g.voxel_center(4, 3, 5);
        for (int i = 0; i < 500; ++i) {
            Vec3 p;
            for (int a = 0; a < 3; ++a) {
                p[a] = std::uniform_real_distribution<double>(lo[a], hi[a])(rng);
            }
            CHECK(std::abs(*sample_trilinear(f, p) - fn(p[0], p[1], p[2])) <= 1e-12);
        }
    }

    SUBCASE("outside the box and boundary clamping")
    {
        const ScalarField f = testing::field_from("t", g, [](double x, double, double) { return x; });
        CHECK_FALSE(sample_trilinear(f, {-1.01, 3.0, 1.0}).has_value());
        CHECK_FALSE(sample_trilinear(f, {1.5, 3.0, 1.0}).has_value());
        CHECK(sample_trilinear(f, {-1.0, 3.0, 1.0}).has_value());
        // Within half a voxel of the face the edge sample is returned.
        CHECK(*sample_trilinear(f, {-0.9, 3.0, 1.0}) == doctest::Approx(f.at(0, 0, 0)));
        CHECK(sample_trilinear_clamped(f, {-5.0, 3.0, 1.0}) == doctest::Approx(f.at(0, 0, 0)));
    }

    SUBCASE("continuity across cell faces")
    {
        const ScalarField f = synthetic::random_field("r", 6, 0.0, 1.0, 9);
        const double face = f.grid().voxel_center(3, 0, 0)[0];
        double prev = 1.0;
        for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) {
            const double a = *sample_trilinear(f, {face - eps, 0.41, 0.37});
            const double b = *sample_trilinear(f, {face + eps, 0.41, 0.37});
            const double diff = std::abs(a - b);
            // |df/dx| <= 1 / spacing for values in [0, 1].
            CHECK(diff <= 2 * eps * 6 + 1e-15);
            CHECK(diff <= prev);
            prev = diff;
        }
    }
}
