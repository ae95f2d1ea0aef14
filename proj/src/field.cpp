#include <cubeviz/error.hpp>
#include <cubeviz/field.hpp>

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

namespace cubeviz {

namespace fs = std::filesystem;
using nlohmann::json;

void Grid::validate() const
{
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 2) {
            throw InvalidArgument("grid extent along axis " + std::to_string(a) + " is " +
                                  std::to_string(dims[a]) + ", must be >= 2");
        }
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw InvalidArgument("grid spacing must be positive and finite");
        }
        if (!std::isfinite(origin[a])) {
            throw InvalidArgument("grid origin must be finite");
        }
    }
}

ScalarField::ScalarField(std::string name, Grid grid, std::string units, std::vector<double> values)
    : name_(std::move(name))
    , grid_(std::move(grid))
    , units_(std::move(units))
    , values_(std::move(values))
{
    grid_.validate();
    if (values_.size() != grid_.voxel_count()) {
        throw InvalidArgument(
            "field '" + name_ + "' has " + std::to_string(values_.size()) + " values, grid needs " +
            std::to_string(grid_.voxel_count()));
    }
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("field '" + name_ + "' contains non-finite values");
        }
    }
}

ScalarField ScalarField::renamed(std::string name) const
{
    ScalarField copy = *this;
    copy.name_ = std::move(name);
    return copy;
}

namespace {

template <typename T>
T byteswap_value(T v)
{
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

bool host_matches(Endianness e)
{
    return (e == Endianness::little) == (std::endian::native == std::endian::little);
}

std::size_t element_size(ElementType t)
{
    return t == ElementType::f32 ? 4 : 8;
}

template <typename T>
T required(const json& j, const char* key, const fs::path& where)
{
    if (!j.contains(key)) {
        throw FormatError(where.string() + ": missing key '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(where.string() + ": bad value for '" + key + "': " + e.what());
    }
}

template <typename T>
std::array<T, 3> triple(const json& j, const char* key, const fs::path& where)
{
    auto v = required<std::vector<T>>(j, key, where);
    if (v.size() != 3) {
        throw FormatError(where.string() + ": '" + key + "' must have 3 entries");
    }
    return {v[0], v[1], v[2]};
}

std::string optional_string(const json& j, const char* key, const std::string& fallback)
{
    if (!j.contains(key)) {
        return fallback;
    }
    return j.at(key).get<std::string>();
}

} // namespace

CubeHeader read_cube_header(const fs::path& meta_path)
{
    std::ifstream in(meta_path);
    if (!in) {
        throw IoError("cannot open cube header " + meta_path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(meta_path.string() + ": " + e.what());
    }
    if (!j.is_object()) {
        throw FormatError(meta_path.string() + ": header must be an object");
    }

    CubeHeader h;
    try {
        h.name = required<std::string>(j, "name", meta_path);
        auto dims = triple<long long>(j, "dims", meta_path);
        for (auto d : dims) {
            if (d <= 0) {
                throw FormatError(meta_path.string() + ": dims must be positive");
            }
        }
        h.grid.dims = {
            static_cast<std::size_t>(dims[0]),
            static_cast<std::size_t>(dims[1]),
            static_cast<std::size_t>(dims[2])};
        h.grid.spacing = triple<double>(j, "spacing", meta_path);
        h.grid.origin = triple<double>(j, "origin", meta_path);
        h.grid.length_unit = optional_string(j, "length_unit", "cm");
        h.units = required<std::string>(j, "units", meta_path);

        auto dtype = required<std::string>(j, "dtype", meta_path);
        if (dtype == "f32") {
            h.dtype = ElementType::f32;
        } else if (dtype == "f64") {
            h.dtype = ElementType::f64;
        } else {
            throw FormatError(meta_path.string() + ": unsupported dtype '" + dtype + "'");
        }

        auto endian = optional_string(j, "endianness", "little");
        if (endian == "little") {
            h.endianness = Endianness::little;
        } else if (endian == "big") {
            h.endianness = Endianness::big;
        } else {
            throw FormatError(meta_path.string() + ": unsupported endianness '" + endian + "'");
        }

        auto order = optional_string(j, "order", "x-fastest");
        if (order == "x-fastest") {
            h.order = Linearization::x_fastest;
        } else if (order == "z-fastest") {
            h.order = Linearization::z_fastest;
        } else {
            throw FormatError(meta_path.string() + ": unsupported order '" + order + "'");
        }

        auto policy = optional_string(j, "nan_policy", "reject");
        if (policy == "reject") {
            h.nan_policy = NanPolicy::reject;
        } else if (policy == "clamp_zero") {
            h.nan_policy = NanPolicy::clamp_zero;
        } else {
            throw FormatError(meta_path.string() + ": unsupported nan_policy '" + policy + "'");
        }

        h.data = required<std::string>(j, "data", meta_path);
    } catch (const json::exception& e) {
        throw FormatError(meta_path.string() + ": " + e.what());
    }
    return h;
}

ScalarField load_cube(const fs::path& meta_path)
{
    const CubeHeader h = read_cube_header(meta_path);
    try {
        h.grid.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(meta_path.string() + ": " + e.what());
    }

    const fs::path data_path =
        h.data.is_absolute() ? h.data : meta_path.parent_path() / h.data;
    std::ifstream in(data_path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open cube data " + data_path.string());
    }
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);

    const std::size_t n = h.grid.voxel_count();
    const std::size_t esize = element_size(h.dtype);
    if (file_size != n * esize) {
        throw FormatError(
            data_path.string() + ": size mismatch, expected " + std::to_string(n) +
            " elements of " + std::to_string(esize) + " bytes, file has " +
            std::to_string(file_size) + " bytes");
    }

    std::vector<char> raw(file_size);
    if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) {
        throw IoError("short read on " + data_path.string());
    }

    std::vector<double> stored(n);
    const bool swap = !host_matches(h.endianness);
    if (h.dtype == ElementType::f32) {
        for (std::size_t i = 0; i < n; ++i) {
            float v;
            std::memcpy(&v, raw.data() + i * 4, 4);
            stored[i] = swap ? byteswap_value(v) : v;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            double v;
            std::memcpy(&v, raw.data() + i * 8, 8);
            stored[i] = swap ? byteswap_value(v) : v;
        }
    }

    std::size_t non_finite = 0;
    for (double& v : stored) {
        if (!std::isfinite(v)) {
            ++non_finite;
            v = 0.0;
        }
    }
    if (non_finite > 0 && h.nan_policy == NanPolicy::reject) {
        throw FormatError(
            data_path.string() + ": " + std::to_string(non_finite) +
            " non-finite values (nan_policy=reject)");
    }

    std::vector<double> values;
    if (h.order == Linearization::x_fastest) {
        values = std::move(stored);
    } else {
        // z-fastest: stored index = z + nz * (y + ny * x)
        const auto [nx, ny, nz] = h.grid.dims;
        values.resize(n);
        for (std::size_t x = 0; x < nx; ++x) {
            for (std::size_t y = 0; y < ny; ++y) {
                for (std::size_t z = 0; z < nz; ++z) {
                    values[h.grid.index(x, y, z)] = stored[z + nz * (y + ny * x)];
                }
            }
        }
    }

    return ScalarField(h.name, h.grid, h.units, std::move(values));
}

void save_cube(const ScalarField& field, const fs::path& meta_path, const SaveOptions& options)
{
    const fs::path data_name = meta_path.stem().string() + ".raw";
    const fs::path data_path = meta_path.parent_path() / data_name;
    const bool swap = !host_matches(options.endianness);

    {
        std::ofstream out(data_path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write cube data " + data_path.string());
        }
        std::vector<char> raw(field.values().size() * element_size(options.dtype));
        const auto& v = field.values();
        if (options.dtype == ElementType::f32) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                float f = static_cast<float>(v[i]);
                if (swap) {
                    f = byteswap_value(f);
                }
                std::memcpy(raw.data() + i * 4, &f, 4);
            }
        } else {
            for (std::size_t i = 0; i < v.size(); ++i) {
                double d = swap ? byteswap_value(v[i]) : v[i];
                std::memcpy(raw.data() + i * 8, &d, 8);
            }
        }
        out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
        if (!out) {
            std::error_code ec;
            fs::remove(data_path, ec);
            throw IoError("failed writing " + data_path.string());
        }
    }

    const Grid& g = field.grid();
    json j;
    j["name"] = field.name();
    j["dims"] = {g.dims[0], g.dims[1], g.dims[2]};
    j["spacing"] = {g.spacing[0], g.spacing[1], g.spacing[2]};
    j["origin"] = {g.origin[0], g.origin[1], g.origin[2]};
    j["length_unit"] = g.length_unit;
    j["units"] = field.units();
    j["dtype"] = options.dtype == ElementType::f32 ? "f32" : "f64";
    j["endianness"] = options.endianness == Endianness::little ? "little" : "big";
    j["order"] = "x-fastest";
    j["nan_policy"] = "reject";
    j["data"] = data_name.string();

    const fs::path tmp = meta_path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) {
            std::error_code ec;
            fs::remove(data_path, ec);
            throw IoError("cannot write cube header " + meta_path.string());
        }
        out << j.dump(2) << '\n';
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            fs::remove(data_path, ec);
            throw IoError("failed writing " + meta_path.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, meta_path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move header into place: " + meta_path.string());
    }
}

FieldStats field_stats(const ScalarField& field)
{
    const auto& v = field.values();
    FieldStats s;
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    s.min = *lo;
    s.max = *hi;

    // Neumaier summation keeps the mean exact to rounding for large grids.
    double sum = 0.0;
    double comp = 0.0;
    for (double x : v) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
        if (x > 0.0 && (!s.positive_min || x < *s.positive_min)) {
            s.positive_min = x;
        }
    }
    s.mean = std::clamp((sum + comp) / static_cast<double>(v.size()), s.min, s.max);

    const double width = s.max - s.min;
    constexpr auto bins = FieldStats::histogram_bins;
    for (double x : v) {
        std::size_t b = 0;
        if (width > 0.0) {
            const double pos = (x - s.min) / width * static_cast<double>(bins);
            b = std::min(static_cast<std::size_t>(pos), bins - 1);
        }
        ++s.histogram[b];
    }
    return s;
}

ScalarField downsample(const ScalarField& field, std::size_t factor)
{
    if (factor == 0) {
        throw InvalidArgument("downsample factor must be positive");
    }
    const Grid& in = field.grid();
    Grid out = in;
    for (int a = 0; a < 3; ++a) {
        if (in.dims[a] % factor != 0) {
            throw InvalidArgument(
                "downsample factor " + std::to_string(factor) + " does not divide extent " +
                std::to_string(in.dims[a]));
        }
        out.dims[a] = in.dims[a] / factor;
        out.spacing[a] = in.spacing[a] * static_cast<double>(factor);
        if (out.dims[a] < 2) {
            throw InvalidArgument("downsampled grid would have an extent below 2");
        }
    }

    const double inv = 1.0 / static_cast<double>(factor * factor * factor);
    std::vector<double> values(out.voxel_count());
    for (std::size_t z = 0; z < out.dims[2]; ++z) {
        for (std::size_t y = 0; y < out.dims[1]; ++y) {
            for (std::size_t x = 0; x < out.dims[0]; ++x) {
                double sum = 0.0;
                for (std::size_t k = 0; k < factor; ++k) {
                    for (std::size_t j = 0; j < factor; ++j) {
                        for (std::size_t i = 0; i < factor; ++i) {
                            sum += field.at(x * factor + i, y * factor + j, z * factor + k);
                        }
                    }
                }
                values[out.index(x, y, z)] = sum * inv;
            }
        }
    }
    return ScalarField(field.name(), out, field.units(), std::move(values));
}

namespace {

double interpolate(const ScalarField& field, const Vec3& point)
{
    const Grid& g = field.grid();
    std::size_t i0[3];
    double t[3];
    for (int a = 0; a < 3; ++a) {
        const double n = static_cast<double>(g.dims[a]);
        double c = (point[a] - g.origin[a]) / g.spacing[a] - 0.5;
        c = std::clamp(c, 0.0, n - 1.0);
        double base = std::floor(c);
        if (base > n - 2.0) {
            base = n - 2.0;
        }
        i0[a] = static_cast<std::size_t>(base);
        t[a] = c - base;
    }

    const auto& v = field.values();
    const std::size_t sx = 1;
    const std::size_t sy = g.dims[0];
    const std::size_t sz = g.dims[0] * g.dims[1];
    const std::size_t base = g.index(i0[0], i0[1], i0[2]);

    const double c000 = v[base];
    const double c100 = v[base + sx];
    const double c010 = v[base + sy];
    const double c110 = v[base + sx + sy];
    const double c001 = v[base + sz];
    const double c101 = v[base + sx + sz];
    const double c011 = v[base + sy + sz];
    const double c111 = v[base + sx + sy + sz];

    const double c00 = c000 + t[0] * (c100 - c000);
    const double c10 = c010 + t[0] * (c110 - c010);
    const double c01 = c001 + t[0] * (c101 - c001);
    const double c11 = c011 + t[0] * (c111 - c011);
    const double c0 = c00 + t[1] * (c10 - c00);
    const double c1 = c01 + t[1] * (c11 - c01);
    return c0 + t[2] * (c1 - c0);
}

} // namespace

std::optional<double> sample_trilinear(const ScalarField& field, const Vec3& point)
{
    const Grid& g = field.grid();
    const Vec3 upper = g.upper_corner();
    for (int a = 0; a < 3; ++a) {
        if (!(point[a] >= g.origin[a] && point[a] < upper[a])) {
            return std::nullopt;
        }
    }
    return interpolate(field, point);
}

double sample_trilinear_clamped(const ScalarField& field, const Vec3& point)
{
    return interpolate(field, point);
}

} // namespace cubeviz
