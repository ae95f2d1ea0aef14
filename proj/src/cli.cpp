#include <cubeviz/atlas.hpp>
#include <cubeviz/cli.hpp>
#include <cubeviz/error.hpp>
#include <cubeviz/expr.hpp>
#include <cubeviz/field.hpp>
#include <cubeviz/mesh.hpp>
#include <cubeviz/render.hpp>
#include <cubeviz/service.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <csignal>
#include <pthread.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

namespace cubeviz {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// A well-formed command line that asks for something impossible.
class UsageError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

std::string shortest(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double parse_number(std::string_view text, std::string_view what)
{
    double v = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    if (begin != end && *begin == '+') {
        ++begin;
    }
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw UsageError("invalid " + std::string(what) + " '" + std::string(text) + "'");
    }
    return v;
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        parts.emplace_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) {
            return parts;
        }
        start = pos + 1;
    }
}

std::string join_numbers(const auto& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += (i ? " " : "") + shortest(static_cast<double>(v[i]));
    }
    return s;
}

// `name=path` pairs; a bare path takes the name stored in the cube header.
std::map<std::string, fs::path> parse_inputs(const std::vector<std::string>& specs)
{
    std::map<std::string, fs::path> inputs;
    for (const auto& spec : specs) {
        std::string name;
        fs::path path;
        if (const auto eq = spec.find('='); eq != std::string::npos) {
            name = spec.substr(0, eq);
            path = spec.substr(eq + 1);
        } else {
            path = spec;
            name = read_cube_header(path).name;
        }
        if (name.empty() || path.empty()) {
            throw UsageError("invalid input '" + spec + "', expected name=path");
        }
        if (!inputs.emplace(name, path).second) {
            throw UsageError("input name '" + name + "' given twice");
        }
    }
    return inputs;
}

FieldSet load_inputs(const std::map<std::string, fs::path>& inputs)
{
    FieldSet fields;
    for (const auto& [name, path] : inputs) {
        fields.emplace(name, load_cube(path).renamed(name));
    }
    return fields;
}

NormalizationSpec range_for(NormalizationMode mode, const FieldStats& stats)
{
    if (mode == NormalizationMode::log10) {
        if (!stats.positive_min || !(*stats.positive_min < stats.max)) {
            throw InvalidArgument("field has no positive range for log10 normalization");
        }
        return {mode, *stats.positive_min, stats.max};
    }
    if (!(stats.min < stats.max)) {
        return {mode, stats.min - 0.5, stats.max + 0.5};
    }
    return {mode, stats.min, stats.max};
}

struct ChannelFlag
{
    Channel channel;
    std::string field;
    std::optional<NormalizationMode> mode;
    std::optional<std::pair<double, double>> range;
};

// R=field[:mode[:lo:hi]]
ChannelFlag parse_channel_flag(const std::string& spec)
{
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
        throw UsageError("invalid channel '" + spec + "', expected C=field[:mode[:lo:hi]]");
    }
    ChannelFlag flag{};
    try {
        flag.channel = parse_channel(spec.substr(0, eq));
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    const auto parts = split(std::string_view(spec).substr(eq + 1), ':');
    if (parts[0].empty() || parts.size() == 3 || parts.size() > 4) {
        throw UsageError("invalid channel '" + spec + "', expected C=field[:mode[:lo:hi]]");
    }
    flag.field = parts[0];
    if (parts.size() >= 2) {
        try {
            flag.mode = parse_mode(parts[1]);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    }
    if (parts.size() == 4) {
        flag.range = {parse_number(parts[2], "lower bound"), parse_number(parts[3], "upper bound")};
    }
    return flag;
}

Vec3 parse_color(const std::string& text)
{
    if (text.size() == 7 && text[0] == '#') {
        Vec3 c{};
        for (int i = 0; i < 3; ++i) {
            unsigned v = 0;
            const char* b = text.data() + 1 + 2 * i;
            auto [ptr, ec] = std::from_chars(b, b + 2, v, 16);
            if (ec != std::errc() || ptr != b + 2) {
                throw UsageError("invalid color '" + text + "'");
            }
            c[i] = v / 255.0;
        }
        return c;
    }
    const auto parts = split(text, ',');
    if (parts.size() != 3) {
        throw UsageError("invalid color '" + text + "', expected #rrggbb or r,g,b");
    }
    return {parse_number(parts[0], "color"), parse_number(parts[1], "color"), parse_number(parts[2], "color")};
}

// v[:color[:opacity]]
LayerSpec parse_layer_flag(const std::string& spec)
{
    const auto parts = split(spec, ':');
    if (parts.size() > 3) {
        throw UsageError("invalid layer '" + spec + "', expected value:color:opacity");
    }
    LayerSpec layer{parse_number(parts[0], "layer value")};
    if (parts.size() >= 2) {
        layer.color = parse_color(parts[1]);
    }
    if (parts.size() == 3) {
        layer.opacity = parse_number(parts[2], "opacity");
        if (!(layer.opacity > 0.0 && layer.opacity <= 1.0)) {
            throw UsageError("layer opacity must lie in (0, 1]");
        }
    }
    return layer;
}

MeshFormat format_for(const std::string& flag, const fs::path& out)
{
    try {
        if (!flag.empty()) {
            return parse_mesh_format(flag);
        }
        return parse_mesh_format(out.extension().string().substr(out.extension().empty() ? 0 : 1));
    } catch (const Error&) {
        throw UsageError("cannot determine mesh format; pass --format obj or --format gltf");
    }
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Options
{
    std::string cube;
    std::string format = "text";
    std::string expr;
    std::vector<std::string> inputs;
    std::string out;
    std::string name = "expr";
    std::string units;
    std::string dtype = "f64";
    std::vector<std::string> channels;
    std::string axis = "z";
    int depth = 16;
    unsigned workers = 0;
    std::string scene;
    std::string value;
    std::string mesh_format;
    std::vector<std::string> layers;
    std::string config;
    int repeat = 5;
};

int cmd_info(const Options& o, std::ostream& out)
{
    const ScalarField f = load_cube(o.cube);
    const FieldStats s = field_stats(f);
    const Grid& g = f.grid();
    if (o.format == "json") {
        json j{
            {"name", f.name()},
            {"units", f.units()},
            {"dims", g.dims},
            {"spacing", g.spacing},
            {"origin", g.origin},
            {"length_unit", g.length_unit},
            {"min", s.min},
            {"max", s.max},
            {"mean", s.mean},
            {"positive_min", s.positive_min ? json(*s.positive_min) : json(nullptr)},
            {"histogram", s.histogram},
        };
        out << j.dump(2) << '\n';
        return 0;
    }
    out << "name: " << f.name() << '\n'
        << "units: " << f.units() << '\n'
        << "dims: " << join_numbers(g.dims) << '\n'
        << "spacing: " << join_numbers(g.spacing) << '\n'
        << "origin: " << join_numbers(g.origin) << '\n'
        << "length_unit: " << g.length_unit << '\n'
        << "min: " << shortest(s.min) << '\n'
        << "max: " << shortest(s.max) << '\n'
        << "mean: " << shortest(s.mean) << '\n'
        << "positive_min: " << (s.positive_min ? shortest(*s.positive_min) : "none") << '\n';
    return 0;
}

int cmd_eval(const Options& o, std::ostream& out)
{
    FieldExpr expr = [&] {
        try {
            return parse_expression(o.expr);
        } catch (const ExprSyntaxError& e) {
            throw UsageError(e.what());
        }
    }();
    const auto inputs = parse_inputs(o.inputs);
    for (const auto& id : expr.identifiers()) {
        if (!inputs.count(id)) {
            throw UsageError("expression uses '" + id + "' but no --in provides it");
        }
    }
    const FieldSet fields = load_inputs(inputs);
    const EvaluationResult r = evaluate_expression(expr, fields, o.name, o.units);
    SaveOptions opts;
    opts.dtype = o.dtype == "f32" ? ElementType::f32 : ElementType::f64;
    save_cube(r.field, o.out, opts);
    out << "wrote " << o.out << " (" << r.degenerate_voxels << " degenerate voxels)\n";
    return 0;
}

int cmd_pack(const Options& o, std::ostream& out)
{
    const auto inputs = parse_inputs(o.inputs);
    std::vector<ChannelFlag> flags;
    for (const auto& spec : o.channels) {
        ChannelFlag f = parse_channel_flag(spec);
        if (!inputs.count(f.field)) {
            throw UsageError("channel " + std::string(1, channel_letter(f.channel)) + " references unknown field '"
                + f.field + "'");
        }
        for (const auto& prev : flags) {
            if (prev.channel == f.channel) {
                throw UsageError("channel " + std::string(1, channel_letter(f.channel)) + " assigned twice");
            }
        }
        flags.push_back(std::move(f));
    }
    Axis axis;
    try {
        axis = parse_axis(o.axis);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }

    const FieldSet fields = load_inputs(inputs);
    ChannelAssignment assignment;
    for (const auto& f : flags) {
        NormalizationSpec spec;
        if (f.range) {
            spec = {*f.mode, f.range->first, f.range->second};
        } else if (f.mode) {
            spec = range_for(*f.mode, field_stats(fields.at(f.field)));
        } else {
            spec = default_normalization(field_stats(fields.at(f.field)));
        }
        assignment.push_back({f.channel, f.field, spec});
    }
    const PackedAtlas atlas = pack_atlas(fields, assignment, axis, o.depth, o.workers);
    write_atlas(atlas.image, atlas.meta, o.out);
    out << "wrote " << atlas_png_path(o.out).string() << " (" << atlas.image.width << "x" << atlas.image.height
        << ", " << atlas.meta.layout.n_slices << " slices)\n";
    return 0;
}

fs::path strip_atlas_extension(const fs::path& p)
{
    if (p.extension() == ".png" || p.extension() == ".json") {
        return fs::path(p).replace_extension();
    }
    return p;
}

int cmd_render(const Options& o, std::ostream& out)
{
    Scene scene = load_scene(o.scene);
    std::unique_ptr<VolumeSource> source;

    const bool atlas_input = o.inputs.size() == 1 && o.inputs[0].find('=') == std::string::npos
        && fs::path(o.inputs[0]).extension() != ".meta";
    if (atlas_input) {
        PackedAtlas atlas = read_atlas(strip_atlas_extension(o.inputs[0]));
        std::vector<Channel> order;
        for (std::size_t i = 0; i < scene.channels.size(); ++i) {
            const SceneChannel& sc = scene.channels[i];
            if (sc.atlas_channel) {
                order.push_back(*sc.atlas_channel);
            } else if (sc.field) {
                const auto it = std::find_if(atlas.meta.channels.begin(), atlas.meta.channels.end(),
                    [&](const AtlasChannelMeta& c) { return c.field == *sc.field; });
                if (it == atlas.meta.channels.end()) {
                    throw UsageError("atlas has no channel holding field '" + *sc.field + "'");
                }
                order.push_back(it->channel);
            } else {
                order.push_back(static_cast<Channel>(std::min<std::size_t>(i, 3)));
            }
        }
        source = std::make_unique<AtlasVolume>(std::move(atlas.image), std::move(atlas.meta), std::move(order));
    } else {
        const auto inputs = parse_inputs(o.inputs);
        for (const auto& sc : scene.channels) {
            if (!sc.field && inputs.size() != 1) {
                throw UsageError("scene channel names no field and several cubes were given");
            }
            if (sc.field && !inputs.count(*sc.field)) {
                throw UsageError("scene uses field '" + *sc.field + "' but no --in provides it");
            }
        }
        const FieldSet fields = load_inputs(inputs);
        std::vector<ScalarField> normalized;
        for (const auto& sc : scene.channels) {
            const ScalarField& f = sc.field ? fields.at(*sc.field) : fields.begin()->second;
            const NormalizationSpec spec = sc.normalization ? *sc.normalization : default_normalization(field_stats(f));
            normalized.push_back(normalize_field(f, spec));
        }
        source = std::make_unique<FieldVolume>(std::move(normalized));
    }

    if (scene.params.step == 0.0) {
        scene.params.step = default_step(source->grid());
    }
    const Image image = render_volume(*source, scene.params, o.workers);
    write_image(image, o.out);
    out << "wrote " << o.out << " (" << image.width << "x" << image.height << ")\n";
    return 0;
}

int cmd_iso(const Options& o, std::ostream& out)
{
    const double iso = parse_number(o.value, "iso value");
    const MeshFormat format = format_for(o.mesh_format, o.out);
    const ScalarField f = load_cube(o.cube);
    const LayeredScene scene = isosurface_scene(f, iso);
    export_mesh(scene, o.out, format);
    const TriangleMesh& m = scene.layers.front().mesh;
    out << "wrote " << o.out << " (" << m.positions.size() << " vertices, " << m.triangles.size()
        << " triangles)\n";
    return 0;
}

int cmd_layers(const Options& o, std::ostream& out)
{
    std::vector<LayerSpec> specs;
    for (const auto& l : o.layers) {
        specs.push_back(parse_layer_flag(l));
    }
    const MeshFormat format = format_for(o.mesh_format, o.out);
    const ScalarField f = load_cube(o.cube);
    const LayeredScene scene = multilayer_surfaces(f, specs);
    export_mesh(scene, o.out, format);
    out << "wrote " << o.out << " (" << scene.layers.size() << " layers)\n";
    return 0;
}

int cmd_serve(const Options& o, std::ostream& out)
{
    const ServerConfig config = ServerConfig::load(o.config);

    // Worker threads inherit the mask, so only sigwait below sees these.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    HttpServer server(config);
    const int port = server.start();
    out << "listening on " << config.host << ":" << port << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    return 0;
}

int cmd_bench_iso(const Options& o, std::ostream& out)
{
    const double iso = parse_number(o.value, "iso value");
    const MeshFormat format = o.mesh_format.empty() ? MeshFormat::obj : format_for(o.mesh_format, {});
    if (o.repeat < 1) {
        throw UsageError("--repeat must be at least 1");
    }
    const fs::path dir = fs::temp_directory_path()
        / ("cubeviz-bench-" + std::to_string(std::random_device{}()) + "-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    struct Cleanup
    {
        fs::path dir;
        ~Cleanup()
        {
            std::error_code ec;
            fs::remove_all(dir, ec);
        }
    } cleanup{dir};

    std::vector<double> runs;
    std::size_t vertices = 0;
    std::size_t triangles = 0;
    for (int i = 0; i < o.repeat; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const ScalarField f = load_cube(o.cube);
        const LayeredScene scene = isosurface_scene(f, iso);
        export_mesh(scene, dir / (std::string("mesh.") + std::string(mesh_format_name(format))), format);
        runs.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        vertices = scene.layers.front().mesh.positions.size();
        triangles = scene.layers.front().mesh.triangles.size();
    }
    const double med = median(runs);
    if (o.format == "json") {
        out << json{
                   {"cube", o.cube},
                   {"value", iso},
                   {"runs_ms", runs},
                   {"median_ms", med},
                   {"vertices", vertices},
                   {"triangles", triangles},
               }.dump(2)
            << '\n';
        return 0;
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        out << "run " << i + 1 << ": " << shortest(std::round(runs[i] * 1000.0) / 1000.0) << " ms\n";
    }
    out << "median: " << shortest(std::round(med * 1000.0) / 1000.0) << " ms\n";
    return 0;
}

const CLI::App* deepest_parsed(const CLI::App* app)
{
    for (const CLI::App* sub : app->get_subcommands()) {
        return deepest_parsed(sub);
    }
    return app;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Data-cube visualization toolkit", "cubeviz"};
    app.require_subcommand(1);
    Options o;

    auto* info = app.add_subcommand("info", "Print statistics of a cube");
    info->add_option("cube", o.cube, "Cube header (.meta)")->required();
    info->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"text", "json"}));

    auto* eval = app.add_subcommand("eval", "Evaluate an expression over cubes");
    eval->add_option("expr", o.expr, "Expression, e.g. log10(rho)")->required();
    eval->add_option("--in", o.inputs, "Input cube as name=path")->required();
    eval->add_option("--out", o.out, "Output cube header")->required();
    eval->add_option("--name", o.name, "Name of the output field");
    eval->add_option("--units", o.units, "Units of the output field");
    eval->add_option("--dtype", o.dtype, "Output element type")->check(CLI::IsMember({"f32", "f64"}));

    auto* pack = app.add_subcommand("pack", "Pack cubes into a texture atlas");
    pack->add_option("--in", o.inputs, "Input cube as name=path")->required();
    pack->add_option("--channel", o.channels, "C=field[:mode[:lo:hi]]")->required();
    pack->add_option("--axis", o.axis, "Slicing axis")->check(CLI::IsMember({"x", "y", "z"}));
    pack->add_option("--depth", o.depth, "Bits per sample")->check(CLI::IsMember({8, 16}));
    pack->add_option("--workers", o.workers, "Worker threads (0 = all cores)");
    pack->add_option("--out", o.out, "Output prefix (writes <prefix>.png and <prefix>.json)")->required();

    auto* render = app.add_subcommand("render", "Render a volume image");
    render->add_option("--scene", o.scene, "Scene file")->required();
    render->add_option("--in", o.inputs, "Atlas prefix, or cubes as name=path")->required();
    render->add_option("--out", o.out, "Output PNG")->required();
    render->add_option("--workers", o.workers, "Worker threads (0 = all cores)");

    auto* iso = app.add_subcommand("iso", "Extract an iso-surface");
    iso->add_option("cube", o.cube, "Cube header (.meta)")->required();
    iso->add_option("--value", o.value, "Iso value in physical units")->required();
    iso->add_option("--format", o.mesh_format, "obj or gltf (default: from --out)")
        ->check(CLI::IsMember({"obj", "gltf"}));
    iso->add_option("--out", o.out, "Output mesh")->required();

    auto* layers = app.add_subcommand("layers", "Extract several iso-surfaces into one scene");
    layers->add_option("cube", o.cube, "Cube header (.meta)")->required();
    layers->add_option("--layer", o.layers, "value:color:opacity, color as #rrggbb or r,g,b")->required();
    layers->add_option("--format", o.mesh_format, "obj or gltf (default: from --out)")
        ->check(CLI::IsMember({"obj", "gltf"}));
    layers->add_option("--out", o.out, "Output mesh")->required();

    auto* serve = app.add_subcommand("serve", "Run the analysis HTTP service");
    serve->add_option("--config", o.config, "Server config file")->required();

    auto* bench = app.add_subcommand("bench", "Benchmarks");
    bench->require_subcommand(1);
    auto* bench_iso = bench->add_subcommand("iso", "Time load + extraction + normals + export");
    bench_iso->add_option("cube", o.cube, "Cube header (.meta)")->required();
    bench_iso->add_option("--value", o.value, "Iso value in physical units")->required();
    bench_iso->add_option("--repeat", o.repeat, "Number of runs");
    bench_iso->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"text", "json"}));
    bench_iso->add_option("--mesh-format", o.mesh_format, "obj or gltf")->check(CLI::IsMember({"obj", "gltf"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << deepest_parsed(&app)->help();
        return 1;
    }

    try {
        if (info->parsed()) return cmd_info(o, out);
        if (eval->parsed()) return cmd_eval(o, out);
        if (pack->parsed()) return cmd_pack(o, out);
        if (render->parsed()) return cmd_render(o, out);
        if (iso->parsed()) return cmd_iso(o, out);
        if (layers->parsed()) return cmd_layers(o, out);
        if (serve->parsed()) return cmd_serve(o, out);
        if (bench_iso->parsed()) return cmd_bench_iso(o, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << deepest_parsed(&app)->help();
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    err << app.help();
    return 1;
}

} // namespace cubeviz
