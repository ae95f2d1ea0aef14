#pragma once

#include <cubeviz/field.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testing {

/// Fresh directory removed on destruction.
class TempDir
{
public:
    TempDir();
    ~TempDir();

    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct CliResult
{
    int code;
    std::string out;
    std::string err;
};

/// Runs the CLI entry point in-process.
CliResult run_cli(const std::vector<std::string>& args);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

/// Field on a grid with unit spacing and zero origin.
cubeviz::ScalarField make_field(
    const std::string& name,
    const cubeviz::Index3& dims,
    std::vector<double> values,
    const std::string& units = "");

/// Field whose values are f(x, y, z) at voxel centers.
template <class F>
cubeviz::ScalarField field_from(const std::string& name, const cubeviz::Grid& grid, F&& f)
{
    std::vector<double> v(grid.voxel_count());
    for (std::size_t z = 0; z < grid.dims[2]; ++z) {
        for (std::size_t y = 0; y < grid.dims[1]; ++y) {
            for (std::size_t x = 0; x < grid.dims[0]; ++x) {
                const auto p = grid.voxel_center(x, y, z);
                v[grid.index(x, y, z)] = f(p[0], p[1], p[2]);
            }
        }
    }
    return cubeviz::ScalarField(name, grid, "", std::move(v));
}

} // namespace testing
