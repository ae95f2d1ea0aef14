#include <cubeviz/atlas.hpp>
#include <cubeviz/error.hpp>
#include <cubeviz/parallel.hpp>
#include <cubeviz/png_io.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace cubeviz {

namespace fs = std::filesystem;
using nlohmann::json;

char channel_letter(Channel c)
{
    return "RGBA"[static_cast<int>(c)];
}

Channel parse_channel(std::string_view text)
{
    if (text.size() == 1) {
        switch (text[0]) {
        case 'R': case 'r': return Channel::R;
        case 'G': case 'g': return Channel::G;
        case 'B': case 'b': return Channel::B;
        case 'A': case 'a': return Channel::A;
        default: break;
        }
    }
    throw InvalidArgument("unknown channel '" + std::string(text) + "' (expected R, G, B or A)");
}

char axis_letter(Axis a)
{
    return "xyz"[static_cast<int>(a)];
}

Axis parse_axis(std::string_view text)
{
    if (text == "x") return Axis::x;
    if (text == "y") return Axis::y;
    if (text == "z") return Axis::z;
    throw InvalidArgument("unknown axis '" + std::string(text) + "' (expected x, y or z)");
}

std::string_view mode_name(NormalizationMode m)
{
    return m == NormalizationMode::linear ? "linear" : "log10";
}

NormalizationMode parse_mode(std::string_view text)
{
    if (text == "linear") return NormalizationMode::linear;
    if (text == "log10") return NormalizationMode::log10;
    throw InvalidArgument("unknown normalization mode '" + std::string(text) + "'");
}

void NormalizationSpec::validate() const
{
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
        throw InvalidArgument("normalization requires finite lo < hi");
    }
    if (mode == NormalizationMode::log10 && !(lo > 0.0)) {
        throw InvalidArgument("log10 normalization requires lo > 0");
    }
}

NormalizationSpec default_normalization(const FieldStats& stats)
{
    if (stats.positive_min && *stats.positive_min < stats.max) {
        return {NormalizationMode::log10, *stats.positive_min, stats.max};
    }
    if (stats.min < stats.max) {
        return {NormalizationMode::linear, stats.min, stats.max};
    }
    // Constant field: any non-empty interval containing the value.
    return {NormalizationMode::linear, stats.min - 0.5, stats.min + 0.5};
}

double normalize_value(double v, const NormalizationSpec& spec)
{
    double u;
    if (spec.mode == NormalizationMode::linear) {
        u = (v - spec.lo) / (spec.hi - spec.lo);
    } else {
        if (v <= 0.0) {
            return 0.0;
        }
        const double llo = std::log10(spec.lo);
        u = (std::log10(v) - llo) / (std::log10(spec.hi) - llo);
    }
    return std::clamp(u, 0.0, 1.0);
}

double denormalize_value(double u, const NormalizationSpec& spec)
{
    if (spec.mode == NormalizationMode::linear) {
        return spec.lo + u * (spec.hi - spec.lo);
    }
    const double llo = std::log10(spec.lo);
    return std::pow(10.0, llo + u * (std::log10(spec.hi) - llo));
}

ScalarField normalize_field(const ScalarField& field, const NormalizationSpec& spec)
{
    spec.validate();
    std::vector<double> out(field.values().size());
    std::transform(field.values().begin(), field.values().end(), out.begin(), [&](double v) {
        return normalize_value(v, spec);
    });
    return ScalarField(field.name(), field.grid(), "normalized", std::move(out));
}

AtlasLayout atlas_layout(const Index3& dims, Axis slice_axis)
{
    const auto [u, v] = in_slice_axes(slice_axis);
    AtlasLayout l;
    l.n_slices = dims[static_cast<int>(slice_axis)];
    l.tile_w = dims[u];
    l.tile_h = dims[v];
    if (l.n_slices == 0) {
        return l;
    }
    l.cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(l.n_slices))));
    // Guard against sqrt rounding on perfect squares.
    while (l.cols * l.cols < l.n_slices) {
        ++l.cols;
    }
    while (l.cols > 1 && (l.cols - 1) * (l.cols - 1) >= l.n_slices) {
        --l.cols;
    }
    l.rows = (l.n_slices + l.cols - 1) / l.cols;
    return l;
}

std::array<int, 2> in_slice_axes(Axis slice_axis)
{
    switch (slice_axis) {
    case Axis::x: return {1, 2};
    case Axis::y: return {0, 2};
    case Axis::z: return {0, 1};
    }
    return {0, 1};
}

PixelCoord voxel_to_pixel(const AtlasLayout& layout, Axis slice_axis, const Index3& voxel)
{
    const auto [u, v] = in_slice_axes(slice_axis);
    const std::size_t k = voxel[static_cast<int>(slice_axis)];
    return {
        (k % layout.cols) * layout.tile_w + voxel[u],
        (k / layout.cols) * layout.tile_h + voxel[v]};
}

const AtlasChannelMeta* AtlasMeta::find(Channel c) const
{
    for (const auto& ch : channels) {
        if (ch.channel == c) {
            return &ch;
        }
    }
    return nullptr;
}

Grid AtlasMeta::grid() const
{
    Grid g;
    g.dims = dims;
    g.spacing = spacing;
    g.origin = origin;
    g.length_unit = length_unit;
    return g;
}

json AtlasMeta::to_json() const
{
    json j;
    j["dims"] = {dims[0], dims[1], dims[2]};
    j["slice_axis"] = std::string(1, axis_letter(slice_axis));
    j["n_slices"] = layout.n_slices;
    j["cols"] = layout.cols;
    j["rows"] = layout.rows;
    j["tile_w"] = layout.tile_w;
    j["tile_h"] = layout.tile_h;
    j["bit_depth"] = bit_depth;
    j["channels"] = json::array();
    for (const auto& c : channels) {
        j["channels"].push_back({
            {"channel", std::string(1, channel_letter(c.channel))},
            {"field", c.field},
            {"units", c.units},
            {"mode", std::string(mode_name(c.normalization.mode))},
            {"lo", c.normalization.lo},
            {"hi", c.normalization.hi},
        });
    }
    j["spacing"] = {spacing[0], spacing[1], spacing[2]};
    j["origin"] = {origin[0], origin[1], origin[2]};
    j["length_unit"] = length_unit;
    return j;
}

AtlasMeta AtlasMeta::from_json(const json& j)
{
    AtlasMeta m;
    try {
        const auto d = j.at("dims").get<std::vector<std::size_t>>();
        const auto s = j.at("spacing").get<std::vector<double>>();
        const auto o = j.at("origin").get<std::vector<double>>();
        if (d.size() != 3 || s.size() != 3 || o.size() != 3) {
            throw FormatError("atlas meta: dims, spacing and origin need 3 entries");
        }
        m.dims = {d[0], d[1], d[2]};
        m.spacing = {s[0], s[1], s[2]};
        m.origin = {o[0], o[1], o[2]};
        m.slice_axis = parse_axis(j.at("slice_axis").get<std::string>());
        m.layout.n_slices = j.at("n_slices").get<std::size_t>();
        m.layout.cols = j.at("cols").get<std::size_t>();
        m.layout.rows = j.at("rows").get<std::size_t>();
        m.layout.tile_w = j.at("tile_w").get<std::size_t>();
        m.layout.tile_h = j.at("tile_h").get<std::size_t>();
        m.bit_depth = j.at("bit_depth").get<int>();
        m.length_unit = j.value("length_unit", std::string("cm"));
        for (const auto& c : j.at("channels")) {
            AtlasChannelMeta ch{
                parse_channel(c.at("channel").get<std::string>()),
                c.at("field").get<std::string>(),
                c.value("units", std::string()),
                {parse_mode(c.at("mode").get<std::string>()), c.at("lo").get<double>(),
                 c.at("hi").get<double>()}};
            m.channels.push_back(std::move(ch));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("atlas meta: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("atlas meta: ") + e.what());
    }
    return m;
}

void AtlasMeta::check_consistent(const AtlasImage& image) const
{
    if (bit_depth != 8 && bit_depth != 16) {
        throw InvalidArgument("atlas bit depth must be 8 or 16");
    }
    if (image.bit_depth != bit_depth) {
        throw InvalidArgument("atlas image bit depth differs from meta");
    }
    if (atlas_layout(dims, slice_axis) != layout) {
        throw InvalidArgument("atlas meta layout does not match its declared dims and slice axis");
    }
    if (image.width != layout.width() || image.height != layout.height()) {
        throw InvalidArgument(
            "atlas image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
            " but meta declares " + std::to_string(layout.width()) + "x" +
            std::to_string(layout.height()));
    }
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 4) {
        throw InvalidArgument("atlas pixel buffer has the wrong size");
    }
    if (channels.empty() || channels.size() > 4) {
        throw InvalidArgument("atlas meta must describe 1 to 4 channels");
    }
    for (std::size_t i = 0; i < channels.size(); ++i) {
        channels[i].normalization.validate();
        for (std::size_t j = i + 1; j < channels.size(); ++j) {
            if (channels[i].channel == channels[j].channel) {
                throw InvalidArgument("atlas meta assigns a channel twice");
            }
        }
    }
    grid().validate();
}

PackedAtlas pack_atlas(
    const FieldSet& fields,
    const ChannelAssignment& assignment,
    Axis slice_axis,
    int bit_depth,
    unsigned workers)
{
    if (assignment.empty() || assignment.size() > 4) {
        throw InvalidArgument("channel assignment must have 1 to 4 entries");
    }
    if (bit_depth != 8 && bit_depth != 16) {
        throw InvalidArgument("bit depth must be 8 or 16");
    }

    std::vector<const ScalarField*> sources;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        for (std::size_t j = i + 1; j < assignment.size(); ++j) {
            if (assignment[i].channel == assignment[j].channel) {
                throw InvalidArgument(
                    std::string("channel ") + channel_letter(assignment[i].channel) +
                    " assigned twice");
            }
        }
        assignment[i].normalization.validate();
        auto it = fields.find(assignment[i].field);
        if (it == fields.end()) {
            throw InvalidArgument("unknown field '" + assignment[i].field + "'");
        }
        if (!sources.empty() && !sources.front()->grid().same_geometry(it->second.grid())) {
            throw InvalidArgument("field '" + assignment[i].field + "' is on a different grid");
        }
        sources.push_back(&it->second);
    }

    const Grid& grid = sources.front()->grid();
    PackedAtlas out;
    AtlasMeta& meta = out.meta;
    meta.dims = grid.dims;
    meta.slice_axis = slice_axis;
    meta.layout = atlas_layout(grid.dims, slice_axis);
    meta.bit_depth = bit_depth;
    meta.spacing = grid.spacing;
    meta.origin = grid.origin;
    meta.length_unit = grid.length_unit;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        meta.channels.push_back(
            {assignment[i].channel, assignment[i].field, sources[i]->units(), assignment[i].normalization});
    }

    AtlasImage& image = out.image;
    image.width = static_cast<std::uint32_t>(meta.layout.width());
    image.height = static_cast<std::uint32_t>(meta.layout.height());
    image.bit_depth = bit_depth;
    image.pixels.assign(static_cast<std::size_t>(image.width) * image.height * 4, 0);

    const double scale = static_cast<double>((1u << bit_depth) - 1u);
    const auto [ua, va] = in_slice_axes(slice_axis);
    const int sa = static_cast<int>(slice_axis);
    const AtlasLayout layout = meta.layout;

    // Each slice owns a disjoint tile, so slices can be filled in parallel.
    parallel_for(layout.n_slices, workers, [&](std::size_t begin, std::size_t end) {
        Index3 voxel{};
        for (std::size_t k = begin; k < end; ++k) {
            voxel[sa] = k;
            for (std::size_t b = 0; b < layout.tile_h; ++b) {
                voxel[va] = b;
                for (std::size_t a = 0; a < layout.tile_w; ++a) {
                    voxel[ua] = a;
                    const PixelCoord p = voxel_to_pixel(layout, slice_axis, voxel);
                    const std::size_t src = grid.index(voxel[0], voxel[1], voxel[2]);
                    std::uint16_t* px = &image.pixels[(p.y * image.width + p.x) * 4];
                    for (std::size_t c = 0; c < assignment.size(); ++c) {
                        const double u = normalize_value(sources[c]->values()[src], assignment[c].normalization);
                        px[static_cast<int>(assignment[c].channel)] =
                            static_cast<std::uint16_t>(std::floor(u * scale + 0.5));
                    }
                }
            }
        }
    });
    return out;
}

ScalarField unpack_atlas(const AtlasImage& image, const AtlasMeta& meta, Channel channel)
{
    meta.check_consistent(image);
    const AtlasChannelMeta* ch = meta.find(channel);
    if (ch == nullptr) {
        throw InvalidArgument(std::string("channel ") + channel_letter(channel) + " is not assigned");
    }

    const Grid grid = meta.grid();
    const double inv = 1.0 / static_cast<double>(image.max_sample());
    std::vector<double> values(grid.voxel_count());
    Index3 v{};
    for (v[2] = 0; v[2] < grid.dims[2]; ++v[2]) {
        for (v[1] = 0; v[1] < grid.dims[1]; ++v[1]) {
            for (v[0] = 0; v[0] < grid.dims[0]; ++v[0]) {
                const PixelCoord p = voxel_to_pixel(meta.layout, meta.slice_axis, v);
                values[grid.index(v[0], v[1], v[2])] = image.sample(p.x, p.y, channel) * inv;
            }
        }
    }
    return ScalarField(ch->field, grid, "normalized", std::move(values));
}

fs::path atlas_png_path(const fs::path& prefix)
{
    return fs::path(prefix.string() + ".png");
}

fs::path atlas_meta_path(const fs::path& prefix)
{
    return fs::path(prefix.string() + ".json");
}

void write_atlas(const AtlasImage& image, const AtlasMeta& meta, const fs::path& prefix)
{
    meta.check_consistent(image);
    PngRaster raster;
    raster.width = image.width;
    raster.height = image.height;
    raster.bit_depth = image.bit_depth;
    raster.channels = 4;
    raster.samples = image.pixels;
    write_png(atlas_png_path(prefix), raster);

    const fs::path meta_path = atlas_meta_path(prefix);
    std::ofstream out(meta_path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + meta_path.string());
    }
    out << meta.to_json().dump(2) << '\n';
    if (!out) {
        throw IoError("failed writing " + meta_path.string());
    }
}

PackedAtlas read_atlas(const fs::path& prefix)
{
    const fs::path meta_path = atlas_meta_path(prefix);
    std::ifstream in(meta_path);
    if (!in) {
        throw IoError("missing atlas sidecar " + meta_path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(meta_path.string() + ": " + e.what());
    }

    PackedAtlas out;
    out.meta = AtlasMeta::from_json(j);
    const PngRaster raster = read_png(atlas_png_path(prefix));
    if (raster.channels != 4) {
        throw FormatError(atlas_png_path(prefix).string() + ": atlas PNG must be RGBA");
    }
    out.image.width = raster.width;
    out.image.height = raster.height;
    out.image.bit_depth = raster.bit_depth;
    out.image.pixels = raster.samples;
    out.meta.check_consistent(out.image);
    return out;
}

} // namespace cubeviz
