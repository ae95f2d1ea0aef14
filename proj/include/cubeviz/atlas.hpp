#pragma once

#include <cubeviz/expr.hpp>
#include <cubeviz/field.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace cubeviz {

enum class Channel { R = 0, G = 1, B = 2, A = 3 };
enum class Axis { x = 0, y = 1, z = 2 };
enum class NormalizationMode { linear, log10 };

char channel_letter(Channel c);
Channel parse_channel(std::string_view text);
char axis_letter(Axis a);
Axis parse_axis(std::string_view text);
std::string_view mode_name(NormalizationMode m);
NormalizationMode parse_mode(std::string_view text);

/// Maps physical values to [0, 1]; values outside [lo, hi] clamp.
struct NormalizationSpec
{
    NormalizationMode mode = NormalizationMode::log10;
    double lo = 0.0;
    double hi = 1.0;

    /// Throws InvalidArgument unless lo < hi (and lo > 0 for log10).
    void validate() const;
};

/// log10 over [positive_min, max] of the field, falling back to linear
/// [min, max] when the field has no positive values or is constant in log space.
NormalizationSpec default_normalization(const FieldStats& stats);

double normalize_value(double v, const NormalizationSpec& spec);

/// Inverse of the unclamped mapping.
double denormalize_value(double u, const NormalizationSpec& spec);

ScalarField normalize_field(const ScalarField& field, const NormalizationSpec& spec);

struct ChannelBinding
{
    Channel channel;
    std::string field;
    NormalizationSpec normalization;
};

/// One to four bindings, no channel used twice.
using ChannelAssignment = std::vector<ChannelBinding>;

/// Tile grid for a given source grid and slicing axis.
struct AtlasLayout
{
    std::size_t n_slices = 0;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::size_t tile_w = 0;
    std::size_t tile_h = 0;

    std::size_t width() const { return cols * tile_w; }
    std::size_t height() const { return rows * tile_h; }

    friend bool operator==(const AtlasLayout&, const AtlasLayout&) = default;
};

AtlasLayout atlas_layout(const Index3& dims, Axis slice_axis);

/// The two in-slice grid axes in ascending order: (tile x axis, tile y axis).
std::array<int, 2> in_slice_axes(Axis slice_axis);

struct PixelCoord
{
    std::size_t x;
    std::size_t y;
};

/// Pixel holding voxel (x, y, z).
PixelCoord voxel_to_pixel(const AtlasLayout& layout, Axis slice_axis, const Index3& voxel);

/// 4-channel raster, RGBA interleaved, rows top to bottom.
struct AtlasImage
{
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    int bit_depth = 16;
    std::vector<std::uint16_t> pixels;

    std::uint16_t sample(std::size_t x, std::size_t y, Channel c) const
    {
        return pixels[(y * width + x) * 4 + static_cast<std::size_t>(c)];
    }

    std::uint32_t max_sample() const { return (1u << bit_depth) - 1u; }
};

struct AtlasChannelMeta
{
    Channel channel;
    std::string field;
    std::string units;
    NormalizationSpec normalization;
};

/// Sidecar document that makes an atlas self-describing and invertible.
struct AtlasMeta
{
    Index3 dims{};
    Axis slice_axis = Axis::z;
    AtlasLayout layout;
    int bit_depth = 16;
    std::vector<AtlasChannelMeta> channels;
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    std::string length_unit = "cm";

    const AtlasChannelMeta* find(Channel c) const;
    Grid grid() const;

    nlohmann::json to_json() const;
    static AtlasMeta from_json(const nlohmann::json& j);

    /// Throws InvalidArgument when the meta is internally inconsistent or does
    /// not describe `image`.
    void check_consistent(const AtlasImage& image) const;
};

struct PackedAtlas
{
    AtlasImage image;
    AtlasMeta meta;
};

/// Slices every assigned field along `slice_axis` into a tile grid and stores
/// the quantized normalized values in the assigned channels.
PackedAtlas pack_atlas(
    const FieldSet& fields,
    const ChannelAssignment& assignment,
    Axis slice_axis = Axis::z,
    int bit_depth = 16,
    unsigned workers = 1);

/// Reconstructs the normalized field stored in `channel`.
ScalarField unpack_atlas(const AtlasImage& image, const AtlasMeta& meta, Channel channel);

/// Writes `<prefix>.png` and the `<prefix>.json` sidecar.
void write_atlas(const AtlasImage& image, const AtlasMeta& meta, const std::filesystem::path& prefix);
PackedAtlas read_atlas(const std::filesystem::path& prefix);

std::filesystem::path atlas_png_path(const std::filesystem::path& prefix);
std::filesystem::path atlas_meta_path(const std::filesystem::path& prefix);

} // namespace cubeviz
