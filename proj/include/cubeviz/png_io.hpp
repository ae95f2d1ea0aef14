#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cubeviz {

/// Raw PNG raster: `channels` interleaved samples per pixel, rows top to
/// bottom. Samples are stored widened to 16 bits regardless of bit depth.
struct PngRaster
{
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    int bit_depth = 8; // 8 or 16
    int channels = 4;  // 3 (RGB) or 4 (RGBA)
    std::vector<std::uint16_t> samples;
};

/// Writes without gamma, premultiplication or any colour transformation;
/// samples are stored as given.
void write_png(const std::filesystem::path& path, const PngRaster& raster);

/// Reads an 8/16-bit RGB or RGBA PNG and returns samples untouched.
PngRaster read_png(const std::filesystem::path& path);

} // namespace cubeviz
