#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cubeviz {

using Index3 = std::array<std::size_t, 3>;
using Vec3 = std::array<double, 3>;

/// Geometry of a uniform voxel grid. Voxel (i, j, k) is a sample located at
/// origin + (index + 0.5) * spacing, i.e. values live at voxel centers.
struct Grid
{
    Index3 dims{2, 2, 2};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    std::string length_unit = "cm";

    std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }

    /// Linear index with x fastest and z slowest.
    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const
    {
        return x + dims[0] * (y + dims[1] * z);
    }

    Vec3 voxel_center(std::size_t x, std::size_t y, std::size_t z) const
    {
        return {
            origin[0] + (static_cast<double>(x) + 0.5) * spacing[0],
            origin[1] + (static_cast<double>(y) + 0.5) * spacing[1],
            origin[2] + (static_cast<double>(z) + 0.5) * spacing[2]};
    }

    Vec3 upper_corner() const
    {
        return {
            origin[0] + static_cast<double>(dims[0]) * spacing[0],
            origin[1] + static_cast<double>(dims[1]) * spacing[1],
            origin[2] + static_cast<double>(dims[2]) * spacing[2]};
    }

    /// Same dims, spacing and origin (exact comparison).
    bool same_geometry(const Grid& other) const
    {
        return dims == other.dims && spacing == other.spacing && origin == other.origin;
    }

    /// Throws InvalidArgument unless every extent is >= 2 and spacing is positive.
    void validate() const;
};

/// A scalar quantity sampled on a uniform grid. Fields are immutable once
/// constructed; the constructor enforces the size and finiteness invariants.
class ScalarField
{
public:
    ScalarField(std::string name, Grid grid, std::string units, std::vector<double> values);

    const std::string& name() const { return name_; }
    const Grid& grid() const { return grid_; }
    const Index3& dims() const { return grid_.dims; }
    const std::string& units() const { return units_; }
    const std::vector<double>& values() const { return values_; }

    double at(std::size_t x, std::size_t y, std::size_t z) const
    {
        return values_[grid_.index(x, y, z)];
    }

    /// Copy with a different name.
    ScalarField renamed(std::string name) const;

private:
    std::string name_;
    Grid grid_;
    std::string units_;
    std::vector<double> values_;
};

enum class ElementType { f32, f64 };
enum class Endianness { little, big };
enum class Linearization { x_fastest, z_fastest };
enum class NanPolicy { reject, clamp_zero };

struct SaveOptions
{
    ElementType dtype = ElementType::f64;
    Endianness endianness = Endianness::little;
};

/// Reads a "cube": a JSON header plus a headerless raw data file referenced by
/// a path relative to the header.
ScalarField load_cube(const std::filesystem::path& meta_path);

/// Reads only the header of a cube, without touching the data file.
struct CubeHeader
{
    std::string name;
    Grid grid;
    std::string units;
    ElementType dtype = ElementType::f64;
    Endianness endianness = Endianness::little;
    Linearization order = Linearization::x_fastest;
    NanPolicy nan_policy = NanPolicy::reject;
    std::filesystem::path data;
};
CubeHeader read_cube_header(const std::filesystem::path& meta_path);

/// Writes `<stem>.raw` next to the header (always x-fastest). The header is
/// written last and atomically; on failure no header is left behind.
void save_cube(
    const ScalarField& field,
    const std::filesystem::path& meta_path,
    const SaveOptions& options = {});

struct FieldStats
{
    static constexpr std::size_t histogram_bins = 64;

    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    std::optional<double> positive_min;
    std::array<std::size_t, histogram_bins> histogram{};
};

FieldStats field_stats(const ScalarField& field);

/// Block-averages `factor`^3 voxels into one. Spacing is scaled by `factor`.
ScalarField downsample(const ScalarField& field, std::size_t factor);

/// Trilinear interpolation at a physical point. Returns nullopt outside
/// [origin, origin + dims * spacing). Within half a voxel of the boundary the
/// sample clamps to the edge voxels.
std::optional<double> sample_trilinear(const ScalarField& field, const Vec3& point);

/// Same as sample_trilinear but clamps points outside the domain to the box.
double sample_trilinear_clamped(const ScalarField& field, const Vec3& point);

} // namespace cubeviz
