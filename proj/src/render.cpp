#include <cubeviz/error.hpp>
#include <cubeviz/parallel.hpp>
#include <cubeviz/png_io.hpp>
#include <cubeviz/render.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace cubeviz {

using nlohmann::json;

namespace {

constexpr double kappa_floor = 1e-12;
constexpr double transmittance_cutoff = 1e-3;

Vec3 sub(const Vec3& a, const Vec3& b)
{
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

Vec3 cross(const Vec3& a, const Vec3& b)
{
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& a)
{
    return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

Vec3 normalized(const Vec3& a)
{
    const double n = norm(a);
    return {a[0] / n, a[1] / n, a[2] / n};
}

bool finite3(const Vec3& a)
{
    return std::isfinite(a[0]) && std::isfinite(a[1]) && std::isfinite(a[2]);
}

} // namespace

TransferFunction::TransferFunction(std::vector<ControlPoint> points)
    : points_(std::move(points))
{
    if (points_.size() < 2) {
        throw InvalidArgument("transfer function needs at least 2 control points");
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const auto& p = points_[i];
        if (!(p.u >= 0.0 && p.u <= 1.0)) {
            throw InvalidArgument("transfer function control point u must lie in [0, 1]");
        }
        if (i > 0 && !(p.u > points_[i - 1].u)) {
            throw InvalidArgument("transfer function control points must be strictly increasing in u");
        }
        if (!finite3(p.emission) || !std::isfinite(p.absorption) || p.absorption < 0.0 ||
            p.emission[0] < 0.0 || p.emission[1] < 0.0 || p.emission[2] < 0.0) {
            throw InvalidArgument("transfer function outputs must be finite and non-negative");
        }
    }
}

TransferFunction TransferFunction::constant(const Vec3& emission, double absorption)
{
    return TransferFunction({{0.0, emission, absorption}, {1.0, emission, absorption}});
}

TransferFunction TransferFunction::ramp(const Vec3& emission, double absorption)
{
    return TransferFunction({{0.0, {0.0, 0.0, 0.0}, 0.0}, {1.0, emission, absorption}});
}

Optics TransferFunction::evaluate(double u) const
{
    if (u <= points_.front().u) {
        return {points_.front().emission, points_.front().absorption};
    }
    if (u >= points_.back().u) {
        return {points_.back().emission, points_.back().absorption};
    }
    auto it = std::upper_bound(points_.begin(), points_.end(), u, [](double v, const ControlPoint& p) {
        return v < p.u;
    });
    const ControlPoint& b = *it;
    const ControlPoint& a = *(it - 1);
    const double t = (u - a.u) / (b.u - a.u);
    Optics o;
    for (int c = 0; c < 3; ++c) {
        o.emission[c] = a.emission[c] + t * (b.emission[c] - a.emission[c]);
    }
    o.absorption = a.absorption + t * (b.absorption - a.absorption);
    return o;
}

void RenderParams::validate() const
{
    const Vec3 view = sub(camera.look_at, camera.eye);
    if (!finite3(camera.eye) || !finite3(camera.look_at) || !finite3(camera.up)) {
        throw InvalidArgument("camera vectors must be finite");
    }
    if (norm(view) == 0.0) {
        throw InvalidArgument("camera eye and look_at coincide");
    }
    if (norm(cross(normalized(view), camera.up)) < 1e-9 * norm(camera.up) || norm(camera.up) == 0.0) {
        throw InvalidArgument("camera up vector is parallel to the view direction");
    }
    if (!(camera.fov_deg > 0.0 && camera.fov_deg < 180.0)) {
        throw InvalidArgument("field of view must lie in (0, 180) degrees");
    }
    if (width == 0 || height == 0) {
        throw InvalidArgument("image dimensions must be positive");
    }
    if (!(step > 0.0) || !std::isfinite(step)) {
        throw InvalidArgument("step size must be positive");
    }
    if (!(intensity >= 0.0) || !std::isfinite(intensity)) {
        throw InvalidArgument("intensity must be >= 0");
    }
    if (!(balance >= 0.0 && balance <= 1.0)) {
        throw InvalidArgument("balance must lie in [0, 1]");
    }
    if (channels.empty()) {
        throw InvalidArgument("at least one channel transfer function is required");
    }
    if (!finite3(background)) {
        throw InvalidArgument("background must be finite");
    }
}

double default_step(const Grid& grid)
{
    return 0.5 * std::min({grid.spacing[0], grid.spacing[1], grid.spacing[2]});
}

Optics compose_emission(std::span<const double> samples, const RenderParams& params)
{
    const std::size_t n = std::min(samples.size(), params.channels.size());
    Optics mixed;
    if (n == 0) {
        return mixed;
    }
    Vec3 e{0.0, 0.0, 0.0};
    double k = 0.0;
    if (n == 1) {
        const Optics o = params.channels[0].evaluate(samples[0]);
        e = o.emission;
        k = o.absorption;
    } else {
        const double b = params.balance;
        const Optics o1 = params.channels[0].evaluate(samples[0]);
        const Optics o2 = params.channels[1].evaluate(samples[1]);
        for (int c = 0; c < 3; ++c) {
            e[c] = b * o1.emission[c] + (1.0 - b) * o2.emission[c];
        }
        k = b * o1.absorption + (1.0 - b) * o2.absorption;
        for (std::size_t i = 2; i < n; ++i) {
            const Optics o = params.channels[i].evaluate(samples[i]);
            for (int c = 0; c < 3; ++c) {
                e[c] += o.emission[c];
            }
            k += o.absorption;
        }
    }
    for (int c = 0; c < 3; ++c) {
        mixed.emission[c] = params.intensity * e[c];
    }
    mixed.absorption = k;
    return mixed;
}

FieldVolume::FieldVolume(std::vector<ScalarField> normalized)
    : fields_(std::move(normalized))
{
    if (fields_.empty()) {
        throw InvalidArgument("volume needs at least one field");
    }
    for (const auto& f : fields_) {
        if (!f.grid().same_geometry(fields_.front().grid())) {
            throw InvalidArgument("volume fields must share one grid");
        }
    }
}

void FieldVolume::sample(const Vec3& point, std::span<double> out) const
{
    for (std::size_t c = 0; c < fields_.size() && c < out.size(); ++c) {
        out[c] = sample_trilinear_clamped(fields_[c], point);
    }
}

AtlasVolume::AtlasVolume(AtlasImage image, AtlasMeta meta, std::vector<Channel> order)
    : image_(std::move(image))
    , meta_(std::move(meta))
    , order_(std::move(order))
{
    meta_.check_consistent(image_);
    grid_ = meta_.grid();
    if (order_.empty()) {
        throw InvalidArgument("atlas volume needs at least one channel");
    }
    for (Channel c : order_) {
        if (meta_.find(c) == nullptr) {
            throw InvalidArgument(std::string("atlas channel ") + channel_letter(c) + " is not assigned");
        }
    }
}

void AtlasVolume::sample(const Vec3& point, std::span<double> out) const
{
    Index3 i0{};
    double t[3];
    for (int a = 0; a < 3; ++a) {
        const double n = static_cast<double>(grid_.dims[a]);
        double c = (point[a] - grid_.origin[a]) / grid_.spacing[a] - 0.5;
        c = std::clamp(c, 0.0, n - 1.0);
        double base = std::floor(c);
        if (base > n - 2.0) {
            base = n - 2.0;
        }
        i0[a] = static_cast<std::size_t>(base);
        t[a] = c - base;
    }

    // Pixel locations of the 8 surrounding voxels; only two tiles (the
    // adjacent slices) are involved.
    PixelCoord px[8];
    for (int corner = 0; corner < 8; ++corner) {
        const Index3 v{i0[0] + (corner & 1), i0[1] + ((corner >> 1) & 1), i0[2] + ((corner >> 2) & 1)};
        px[corner] = voxel_to_pixel(meta_.layout, meta_.slice_axis, v);
    }

    const double inv = 1.0 / static_cast<double>(image_.max_sample());
    for (std::size_t ch = 0; ch < order_.size() && ch < out.size(); ++ch) {
        double c[8];
        for (int corner = 0; corner < 8; ++corner) {
            c[corner] = image_.sample(px[corner].x, px[corner].y, order_[ch]) * inv;
        }
        const double c00 = c[0] + t[0] * (c[1] - c[0]);
        const double c10 = c[2] + t[0] * (c[3] - c[2]);
        const double c01 = c[4] + t[0] * (c[5] - c[4]);
        const double c11 = c[6] + t[0] * (c[7] - c[6]);
        const double c0 = c00 + t[1] * (c10 - c00);
        const double c1 = c01 + t[1] * (c11 - c01);
        out[ch] = c0 + t[2] * (c1 - c0);
    }
}

Vec3 integrate_ray(
    const Vec3& origin,
    const Vec3& direction,
    const VolumeSource& source,
    const RenderParams& params)
{
    const Grid& g = source.grid();
    const Vec3 lo = g.origin;
    const Vec3 hi = g.upper_corner();

    // Slab intersection.
    double t0 = 0.0;
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (direction[a] == 0.0) {
            if (origin[a] < lo[a] || origin[a] > hi[a]) {
                return params.background;
            }
            continue;
        }
        const double inv = 1.0 / direction[a];
        double ta = (lo[a] - origin[a]) * inv;
        double tb = (hi[a] - origin[a]) * inv;
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t0 <= t1)) {
        return params.background;
    }

    const double ds = params.step;
    // Samples at t0, t0 + ds, ... up to and including t1; each stands for one
    // full step.
    const auto steps = static_cast<std::size_t>(std::floor((t1 - t0) / ds * (1.0 + 1e-12))) + 1;

    std::vector<double> samples(source.channel_count());
    Vec3 color{0.0, 0.0, 0.0};
    double transmittance = 1.0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = t0 + static_cast<double>(k) * ds;
        Vec3 p{origin[0] + t * direction[0], origin[1] + t * direction[1], origin[2] + t * direction[2]};
        for (int a = 0; a < 3; ++a) {
            p[a] = std::clamp(p[a], lo[a], hi[a]);
        }
        source.sample(p, samples);
        const Optics o = compose_emission(samples, params);

        double alpha;
        double weight; // integral of exp(-kappa s) over the step
        if (o.absorption > kappa_floor) {
            alpha = -std::expm1(-o.absorption * ds);
            weight = alpha / o.absorption;
        } else {
            alpha = 0.0;
            weight = ds;
        }
        for (int c = 0; c < 3; ++c) {
            color[c] += transmittance * weight * o.emission[c];
        }
        transmittance *= 1.0 - alpha;
        if (transmittance < transmittance_cutoff) {
            break;
        }
    }
    for (int c = 0; c < 3; ++c) {
        color[c] += transmittance * params.background[c];
    }
    return color;
}

Image render_volume(const VolumeSource& source, const RenderParams& params, unsigned workers)
{
    params.validate();
    if (source.channel_count() < params.channels.size()) {
        throw InvalidArgument(
            "scene defines " + std::to_string(params.channels.size()) + " channels but the source provides " +
            std::to_string(source.channel_count()));
    }

    const Camera& cam = params.camera;
    const Vec3 forward = normalized(sub(cam.look_at, cam.eye));
    const Vec3 right = normalized(cross(forward, cam.up));
    const Vec3 up = cross(right, forward);
    const double tan_half = std::tan(cam.fov_deg * std::numbers::pi / 360.0);
    const double aspect = static_cast<double>(params.width) / static_cast<double>(params.height);

    Image image;
    image.width = params.width;
    image.height = params.height;
    image.rgb.assign(static_cast<std::size_t>(params.width) * params.height * 3, 0.0);

    parallel_for(params.height, workers, [&](std::size_t row_begin, std::size_t row_end) {
        for (std::size_t y = row_begin; y < row_end; ++y) {
            const double sy = (1.0 - 2.0 * (static_cast<double>(y) + 0.5) / params.height) * tan_half;
            for (std::size_t x = 0; x < params.width; ++x) {
                const double sx =
                    (2.0 * (static_cast<double>(x) + 0.5) / params.width - 1.0) * tan_half * aspect;
                const Vec3 dir = normalized({
                    forward[0] + sx * right[0] + sy * up[0],
                    forward[1] + sx * right[1] + sy * up[1],
                    forward[2] + sx * right[2] + sy * up[2]});
                const Vec3 c = integrate_ray(cam.eye, dir, source, params);
                double* out = &image.rgb[(y * params.width + x) * 3];
                out[0] = c[0];
                out[1] = c[1];
                out[2] = c[2];
            }
        }
    });
    return image;
}

std::uint8_t encode_sample(double v)
{
    if (!(v > 0.0)) {
        return 0;
    }
    if (v >= 1.0) {
        return 255;
    }
    return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

void write_image(const Image& image, const std::filesystem::path& path)
{
    PngRaster r;
    r.width = image.width;
    r.height = image.height;
    r.bit_depth = 8;
    r.channels = 3;
    r.samples.resize(image.rgb.size());
    std::transform(image.rgb.begin(), image.rgb.end(), r.samples.begin(), [](double v) {
        return static_cast<std::uint16_t>(encode_sample(v));
    });
    write_png(path, r);
}

namespace {

Vec3 vec3(const json& j, const char* key)
{
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 3) {
        throw FormatError(std::string("scene: '") + key + "' needs 3 entries");
    }
    return {v[0], v[1], v[2]};
}

TransferFunction parse_tf(const json& j)
{
    std::vector<ControlPoint> points;
    for (const auto& p : j.at("points")) {
        const auto e = p.at("emission").get<std::vector<double>>();
        if (e.size() != 3) {
            throw FormatError("scene: transfer function emission needs 3 entries");
        }
        points.push_back({p.at("u").get<double>(), {e[0], e[1], e[2]}, p.at("absorption").get<double>()});
    }
    return TransferFunction(std::move(points));
}

} // namespace

Scene parse_scene(const json& j)
{
    Scene s;
    RenderParams& p = s.params;
    try {
        p.camera.eye = vec3(j, "eye");
        p.camera.look_at = vec3(j, "look_at");
        p.camera.up = j.contains("up") ? vec3(j, "up") : Vec3{0.0, 1.0, 0.0};
        p.camera.fov_deg = j.value("fov_deg", 40.0);
        p.width = j.value("width", 256u);
        p.height = j.value("height", 256u);
        p.step = j.value("step", 0.0);
        p.intensity = j.value("intensity", 1.0);
        p.balance = j.value("balance", 0.5);
        p.background = j.contains("background") ? vec3(j, "background") : Vec3{0.0, 0.0, 0.0};
        for (const auto& c : j.at("channels")) {
            SceneChannel sc{parse_tf(c.at("tf")), {}, {}, {}};
            if (c.contains("field")) {
                sc.field = c.at("field").get<std::string>();
            }
            if (c.contains("channel")) {
                sc.atlas_channel = parse_channel(c.at("channel").get<std::string>());
            }
            if (c.contains("normalize")) {
                const auto& n = c.at("normalize");
                sc.normalization = NormalizationSpec{
                    parse_mode(n.at("mode").get<std::string>()), n.at("lo").get<double>(),
                    n.at("hi").get<double>()};
                sc.normalization->validate();
            }
            p.channels.push_back(sc.tf);
            s.channels.push_back(std::move(sc));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("scene: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("scene: ") + e.what());
    }
    if (s.channels.empty()) {
        throw FormatError("scene: at least one channel is required");
    }
    return s;
}

Scene load_scene(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open scene " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return parse_scene(j);
}

} // namespace cubeviz
