#pragma once

#include <cubeviz/atlas.hpp>
#include <cubeviz/field.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cubeviz {

struct Optics
{
    Vec3 emission{0.0, 0.0, 0.0};
    double absorption = 0.0; // per unit physical length
};

struct ControlPoint
{
    double u;
    Vec3 emission;
    double absorption;
};

/// Piecewise-linear map from a normalized sample to emission colour and
/// absorption. Inputs outside the first/last control point clamp.
class TransferFunction
{
public:
    explicit TransferFunction(std::vector<ControlPoint> points);

    /// Constant optics over [0, 1].
    static TransferFunction constant(const Vec3& emission, double absorption);

    /// Emission and absorption proportional to u.
    static TransferFunction ramp(const Vec3& emission, double absorption);

    Optics evaluate(double u) const;
    const std::vector<ControlPoint>& points() const { return points_; }

private:
    std::vector<ControlPoint> points_;
};

struct Camera
{
    Vec3 eye{0.0, 0.0, 3.0};
    Vec3 look_at{0.0, 0.0, 0.0};
    Vec3 up{0.0, 1.0, 0.0};
    double fov_deg = 40.0;
};

struct RenderParams
{
    Camera camera;
    std::uint32_t width = 256;
    std::uint32_t height = 256;
    double step = 0.0;       // physical length; must be > 0 when rendering
    double intensity = 1.0;  // global emission multiplier
    double balance = 0.5;    // weight of channel 1 against channel 2
    std::vector<TransferFunction> channels;
    Vec3 background{0.0, 0.0, 0.0};

    /// Throws InvalidArgument when any invariant is violated.
    void validate() const;
};

/// Half the smallest voxel spacing.
double default_step(const Grid& grid);

/// Balance-weighted mix of the per-channel optics. Channels beyond the
/// second get unit weight; a single channel is used unweighted.
Optics compose_emission(std::span<const double> samples, const RenderParams& params);

/// Volume the ray marcher samples: per-channel normalized values inside an
/// axis-aligned box.
class VolumeSource
{
public:
    virtual ~VolumeSource() = default;

    virtual std::size_t channel_count() const = 0;
    virtual const Grid& grid() const = 0;

    /// Writes one normalized value per channel. `point` lies in the closed
    /// bounding box; points on the faces clamp to edge samples.
    virtual void sample(const Vec3& point, std::span<double> out) const = 0;
};

/// Normalized fields sharing a grid, sampled trilinearly.
class FieldVolume final : public VolumeSource
{
public:
    explicit FieldVolume(std::vector<ScalarField> normalized);

    std::size_t channel_count() const override { return fields_.size(); }
    const Grid& grid() const override { return fields_.front().grid(); }
    void sample(const Vec3& point, std::span<double> out) const override;

private:
    std::vector<ScalarField> fields_;
};

/// Samples straight from a packed atlas: bilinear within a tile, linear
/// between the tiles of adjacent slices.
class AtlasVolume final : public VolumeSource
{
public:
    /// `order` lists the atlas channels feeding render channels 1, 2, ...
    AtlasVolume(AtlasImage image, AtlasMeta meta, std::vector<Channel> order);

    std::size_t channel_count() const override { return order_.size(); }
    const Grid& grid() const override { return grid_; }
    void sample(const Vec3& point, std::span<double> out) const override;

private:
    AtlasImage image_;
    AtlasMeta meta_;
    Grid grid_;
    std::vector<Channel> order_;
};

/// Front-to-back emission-absorption compositing along one ray with fixed
/// steps over the ray/box intersection. `direction` must be unit length.
Vec3 integrate_ray(
    const Vec3& origin,
    const Vec3& direction,
    const VolumeSource& source,
    const RenderParams& params);

/// RGB image with unclamped real samples, rows top to bottom.
struct Image
{
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<double> rgb;

    const double* pixel(std::size_t x, std::size_t y) const { return &rgb[(y * width + x) * 3]; }
};

/// One pinhole ray through each pixel center. The result does not depend on
/// `workers`.
Image render_volume(const VolumeSource& source, const RenderParams& params, unsigned workers = 0);

/// 8-bit RGB PNG; samples clamp to [0, 1] and round half up.
void write_image(const Image& image, const std::filesystem::path& path);
std::uint8_t encode_sample(double v);

/// A scene file: render parameters plus how each channel is sourced.
struct SceneChannel
{
    TransferFunction tf;
    std::optional<std::string> field;                 // cube input
    std::optional<Channel> atlas_channel;             // atlas input
    std::optional<NormalizationSpec> normalization;   // cube input
};

struct Scene
{
    RenderParams params; // step == 0 means "use default_step"
    std::vector<SceneChannel> channels;
};

Scene parse_scene(const nlohmann::json& j);
Scene load_scene(const std::filesystem::path& path);

} // namespace cubeviz
