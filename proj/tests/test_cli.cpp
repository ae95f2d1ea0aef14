#include <cubeviz/atlas.hpp>
#include <cubeviz/field.hpp>
#include <cubeviz/mesh.hpp>
#include <cubeviz/synthetic.hpp>

#include "support/png_oracle.hpp"
#include "support/test_support.hpp"

#include <regex>

#include <doctest.h>
#include <json.hpp>

using namespace cubeviz;
using nlohmann::json;
using testing::run_cli;

namespace {

const char* scene_json = R"({
    "eye": [0.5, 0.5, 3], "look_at": [0.5, 0.5, 0.5], "up": [0, 1, 0], "fov_deg": 30,
    "width": 24, "height": 16, "step": 0, "intensity": 1, "balance": 0.5,
    "background": [0, 0, 0],
    "channels": [
        {"field": "rho_ej", "channel": "R",
         "tf": {"points": [{"u": 0, "emission": [0, 0, 0], "absorption": 0},
                           {"u": 1, "emission": [1, 0.5, 0], "absorption": 4}]}},
        {"field": "rho_cl", "channel": "G",
         "tf": {"points": [{"u": 0, "emission": [0, 0, 0], "absorption": 0},
                           {"u": 1, "emission": [0, 0.5, 1], "absorption": 4}]}}
    ]})";

struct Workspace
{
    testing::TempDir dir;
    std::filesystem::path ej = dir / "rho_ej.meta";
    std::filesystem::path cl = dir / "rho_cl.meta";
    std::filesystem::path dist = dir / "dist.meta";

    Workspace()
    {
        const auto sc = synthetic::shell_and_clump(16);
        save_cube(sc.ejecta, ej);
        save_cube(sc.cloud, cl);
        save_cube(synthetic::sphere_distance(20).renamed("dist"), dist);
    }
};

} // namespace

TEST_CASE("help and usage errors")
{
    const auto top = run_cli({"--help"});
    CHECK(top.code == 0);
    for (const char* sub : {"info", "eval", "pack", "render", "iso", "layers", "serve", "bench"}) {
        CAPTURE(sub);
        CHECK(top.out.find(sub) != std::string::npos);
        const auto r = run_cli({sub, "--help"});
        CHECK(r.code == 0);
        CHECK(r.out.find("Usage") != std::string::npos);
    }
    CHECK(run_cli({"bench", "iso", "--help"}).code == 0);

    const auto unknown = run_cli({"info", "x.meta", "--bogus"});
    CHECK(unknown.code == 1);
    CHECK_FALSE(unknown.err.empty());
    CHECK(run_cli({}).code == 1);
    CHECK(run_cli({"frobnicate"}).code == 1);
    CHECK(run_cli({"iso", "x.meta"}).code == 1);
    CHECK(run_cli({"info", "x.meta", "--format", "xml"}).code == 1);
}

TEST_CASE("info")
{
    Workspace ws;
    const auto r = run_cli({"info", ws.ej.string(), "--format", "json"});
    REQUIRE(r.code == 0);
    const json j = json::parse(r.out);
    const FieldStats s = field_stats(load_cube(ws.ej));
    CHECK(j["name"] == "rho_ej");
    CHECK(j["dims"] == json{16, 16, 16});
    CHECK(j["min"].get<double>() == s.min);
    CHECK(j["max"].get<double>() == s.max);
    CHECK(j["mean"].get<double>() == s.mean);
    CHECK(j["histogram"].size() == FieldStats::histogram_bins);

    const auto t = run_cli({"info", ws.ej.string()});
    REQUIRE(t.code == 0);
    CHECK(t.out.find("name: rho_ej\n") != std::string::npos);
    CHECK(t.out.find("dims: 16 16 16\n") != std::string::npos);

    const auto missing = run_cli({"info", (ws.dir / "none.meta").string()});
    CHECK(missing.code == 2);
    CHECK_FALSE(missing.err.empty());
}

TEST_CASE("eval")
{
    testing::TempDir dir;
    save_cube(testing::make_field("rho", {3, 3, 3}, std::vector<double>(27, 100.0), "g/cm^3"), dir / "rho.meta");
    const auto r = run_cli({"eval", "log10(rho)", "--in", "rho=" + (dir / "rho.meta").string(), "--out",
                            (dir / "lrho.meta").string(), "--name", "lrho", "--units", "dex"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("0 degenerate") != std::string::npos);
    const ScalarField out = load_cube(dir / "lrho.meta");
    CHECK(out.name() == "lrho");
    CHECK(out.units() == "dex");
    for (double v : out.values()) {
        CHECK(v == 2.0);
    }

    const auto f32 = run_cli({"eval", "rho / 4", "--in", "rho=" + (dir / "rho.meta").string(), "--out",
                              (dir / "q.meta").string(), "--dtype", "f32"});
    REQUIRE(f32.code == 0);
    CHECK(read_cube_header(dir / "q.meta").dtype == ElementType::f32);
    CHECK(load_cube(dir / "q.meta").values()[0] == 25.0);

    const auto syntax = run_cli({"eval", "log10(", "--in", "rho=" + (dir / "rho.meta").string(), "--out", (dir / "x.meta").string()});
    CHECK(syntax.code == 1);
    const auto unbound = run_cli({"eval", "a + rho", "--in", "rho=" + (dir / "rho.meta").string(), "--out", (dir / "x.meta").string()});
    CHECK(unbound.code == 1);
    CHECK_FALSE(std::filesystem::exists(dir / "x.meta"));
    const auto unreadable = run_cli({"eval", "a", "--in", "a=" + (dir / "nothing.meta").string(), "--out", (dir / "x.meta").string()});
    CHECK(unreadable.code == 2);
}

TEST_CASE("pack")
{
    Workspace ws;
    const auto prefix = ws.dir / "atlas";
    const auto r = run_cli({"pack", "--in", "rho_ej=" + ws.ej.string(), "--in", "rho_cl=" + ws.cl.string(), "--channel",
                            "R=rho_ej", "--channel", "G=rho_cl:linear:0:1e-22", "--out", prefix.string()});
    REQUIRE(r.code == 0);

    FieldSet set;
    set.emplace("rho_ej", load_cube(ws.ej));
    set.emplace("rho_cl", load_cube(ws.cl));
    const PackedAtlas lib = pack_atlas(set,
        {{Channel::R, "rho_ej", default_normalization(field_stats(set.at("rho_ej")))},
         {Channel::G, "rho_cl", {NormalizationMode::linear, 0.0, 1e-22}}});
    write_atlas(lib.image, lib.meta, ws.dir / "lib");
    CHECK(testing::read_file(atlas_png_path(prefix)) == testing::read_file(atlas_png_path(ws.dir / "lib")));
    CHECK(json::parse(testing::read_file(atlas_meta_path(prefix))) == json::parse(testing::read_file(atlas_meta_path(ws.dir / "lib"))));

    const auto eight = run_cli({"pack", "--in", "rho_ej=" + ws.ej.string(), "--channel", "B=rho_ej", "--depth", "8",
                                "--axis", "x", "--out", (ws.dir / "a8").string()});
    REQUIRE(eight.code == 0);
    CHECK(testing::decode_png(atlas_png_path(ws.dir / "a8")).bit_depth == 8);

    const auto missing = run_cli({"pack", "--in", "rho_ej=" + ws.ej.string(), "--channel", "R=rho_ej", "--channel",
                                  "G=rho_xx", "--out", (ws.dir / "bad").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("rho_xx") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(ws.dir / "bad.png"));
    CHECK_FALSE(std::filesystem::exists(ws.dir / "bad.json"));

    const auto twice = run_cli({"pack", "--in", "rho_ej=" + ws.ej.string(), "--channel", "R=rho_ej", "--channel",
                                "R=rho_ej", "--out", (ws.dir / "bad").string()});
    CHECK(twice.code == 1);
}

TEST_CASE("render from cubes and from an atlas")
{
    Workspace ws;
    testing::write_file(ws.dir / "scene.json", scene_json);
    const auto from_cubes = run_cli({"render", "--scene", (ws.dir / "scene.json").string(), "--in",
                                     "rho_ej=" + ws.ej.string(), "--in", "rho_cl=" + ws.cl.string(), "--out",
                                     (ws.dir / "a.png").string(), "--workers", "1"});
    REQUIRE(from_cubes.code == 0);
    const auto png = testing::decode_png(ws.dir / "a.png");
    CHECK(png.width == 24);
    CHECK(png.height == 16);
    CHECK(png.channels == 3);
    CHECK(png.bit_depth == 8);
    CHECK(*std::max_element(png.samples.begin(), png.samples.end()) > 0);

    const auto parallel = run_cli({"render", "--scene", (ws.dir / "scene.json").string(), "--in",
                                   "rho_ej=" + ws.ej.string(), "--in", "rho_cl=" + ws.cl.string(), "--out",
                                   (ws.dir / "b.png").string(), "--workers", "3"});
    REQUIRE(parallel.code == 0);
    CHECK(testing::read_file(ws.dir / "a.png") == testing::read_file(ws.dir / "b.png"));

    REQUIRE(run_cli({"pack", "--in", "rho_ej=" + ws.ej.string(), "--in", "rho_cl=" + ws.cl.string(), "--channel",
                     "R=rho_ej", "--channel", "G=rho_cl", "--out", (ws.dir / "atlas").string()})
                .code == 0);
    const auto from_atlas = run_cli({"render", "--scene", (ws.dir / "scene.json").string(), "--in",
                                     (ws.dir / "atlas").string(), "--out", (ws.dir / "c.png").string()});
    REQUIRE(from_atlas.code == 0);
    const auto atlas_png = testing::decode_png(ws.dir / "c.png");
    int worst = 0;
    for (std::size_t i = 0; i < png.samples.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<int>(png.samples[i]) - static_cast<int>(atlas_png.samples[i])));
    }
    CHECK(worst <= 2);

    const auto missing = run_cli({"render", "--scene", (ws.dir / "scene.json").string(), "--in",
                                  "rho_ej=" + ws.ej.string(), "--out", (ws.dir / "d.png").string()});
    CHECK(missing.code == 1);
}

TEST_CASE("iso and layers match the library")
{
    Workspace ws;
    const ScalarField f = load_cube(ws.dist);
    testing::TempDir ref;
    for (const char* ext : {"obj", "gltf"}) {
        CAPTURE(ext);
        const std::string file = std::string("mesh.") + ext;
        const auto r = run_cli({"iso", ws.dist.string(), "--value", "0.3", "--out", (ws.dir / file).string()});
        REQUIRE(r.code == 0);
        export_mesh(isosurface_scene(f, 0.3), ref / file, parse_mesh_format(ext));
        for (const auto& p : mesh_files(ref / file, parse_mesh_format(ext))) {
            CHECK(testing::read_file(p) == testing::read_file(ws.dir / p.filename().string()));
        }
    }

    const auto l = run_cli({"layers", ws.dist.string(), "--layer", "0.2:#ff0000:0.4", "--layer", "0.3:0,1,0",
                            "--layer", "0.4", "--out", (ws.dir / "layers.gltf").string()});
    REQUIRE(l.code == 0);
    export_mesh(multilayer_surfaces(f, {{0.2, {1, 0, 0}, 0.4}, {0.3, {0, 1, 0}, 1.0}, {0.4}}), ref / "layers.gltf",
        MeshFormat::gltf);
    CHECK(testing::read_file(ws.dir / "layers.gltf") == testing::read_file(ref / "layers.gltf"));
    CHECK(testing::read_file(ws.dir / "layers.bin") == testing::read_file(ref / "layers.bin"));

    CHECK(run_cli({"iso", ws.dist.string(), "--value", "abc", "--out", (ws.dir / "x.obj").string()}).code == 1);
    CHECK(run_cli({"iso", ws.dist.string(), "--value", "0.3", "--out", (ws.dir / "x.stl").string()}).code == 1);
    CHECK(run_cli({"layers", ws.dist.string(), "--layer", "0.3:#ff0000:2", "--out", (ws.dir / "x.obj").string()}).code == 1);

    const auto neg = run_cli({"iso", ws.dist.string(), "--value", "-1", "--out", (ws.dir / "neg.obj").string()});
    CHECK(neg.code == 0);
    CHECK(import_mesh(ws.dir / "neg.obj").layers.at(0).mesh.empty());
}

TEST_CASE("bench iso")
{
    Workspace ws;
    const auto t = run_cli({"bench", "iso", ws.dist.string(), "--value", "0.3", "--repeat", "3"});
    REQUIRE(t.code == 0);
    const std::regex line(R"(run [123]: [0-9.]+ ms)");
    std::size_t runs = 0;
    std::istringstream in(t.out);
    for (std::string s; std::getline(in, s);) {
        runs += std::regex_match(s, line);
    }
    CHECK(runs == 3);
    CHECK(std::regex_search(t.out, std::regex(R"(median: [0-9.]+ ms)")));

    const auto j = run_cli({"bench", "iso", ws.dist.string(), "--value", "0.3", "--repeat", "2", "--format", "json"});
    REQUIRE(j.code == 0);
    const json doc = json::parse(j.out);
    CHECK(doc["runs_ms"].size() == 2);
    CHECK(doc["median_ms"].get<double>() > 0.0);
    CHECK(doc["triangles"].get<std::size_t>() == marching_cubes(load_cube(ws.dist), 0.3).triangles.size());

    CHECK(run_cli({"bench", "iso", ws.dist.string(), "--value", "0.3", "--repeat", "0"}).code == 1);
}

TEST_CASE("serve rejects a bad config")
{
    testing::TempDir dir;
    testing::write_file(dir / "server.json", R"({"listen": "127.0.0.1"})");
    CHECK(run_cli({"serve", "--config", (dir / "server.json").string()}).code != 0);
    CHECK(run_cli({"serve", "--config", (dir / "missing.json").string()}).code == 2);
}
