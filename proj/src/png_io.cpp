#include <cubeviz/error.hpp>
#include <cubeviz/png_io.hpp>

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

namespace cubeviz {

namespace {

struct FileCloser
{
    void operator()(std::FILE* f) const
    {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void warning_sink(png_structp, png_const_charp) {}

[[noreturn]] void error_sink(png_structp png, png_const_charp)
{
    png_longjmp(png, 1);
}

// libpng reports errors through longjmp; these wrappers keep every object with
// a destructor outside the setjmp frame.
bool encode(std::FILE* fp, const PngRaster& r, png_bytep* rows)
{
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_sink, warning_sink);
    if (!png) {
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, fp);
    png_set_compression_level(png, 6);
    png_set_IHDR(
        png, info, r.width, r.height, r.bit_depth,
        r.channels == 4 ? PNG_COLOR_TYPE_RGB_ALPHA : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
        PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

struct Header
{
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int bit_depth = 0;
    int color_type = 0;
    int interlace = 0;
};

bool decode_header(png_structp png, png_infop info, std::FILE* fp, Header& h)
{
    if (setjmp(png_jmpbuf(png))) {
        return false;
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_get_IHDR(png, info, &h.width, &h.height, &h.bit_depth, &h.color_type, &h.interlace, nullptr, nullptr);
    return true;
}

bool decode_rows(png_structp png, png_infop info, png_bytep* rows)
{
    if (setjmp(png_jmpbuf(png))) {
        return false;
    }
    png_read_image(png, rows);
    png_read_end(png, info);
    return true;
}

} // namespace

void write_png(const std::filesystem::path& path, const PngRaster& r)
{
    if (r.bit_depth != 8 && r.bit_depth != 16) {
        throw InvalidArgument("PNG bit depth must be 8 or 16");
    }
    if (r.channels != 3 && r.channels != 4) {
        throw InvalidArgument("PNG must have 3 or 4 channels");
    }
    const std::size_t row_samples = static_cast<std::size_t>(r.width) * r.channels;
    if (r.width == 0 || r.height == 0 || r.samples.size() != row_samples * r.height) {
        throw InvalidArgument("PNG raster size does not match its dimensions");
    }

    const std::size_t bytes_per_sample = r.bit_depth / 8;
    std::vector<png_byte> buffer(r.samples.size() * bytes_per_sample);
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        if (bytes_per_sample == 1) {
            buffer[i] = static_cast<png_byte>(r.samples[i]);
        } else {
            // PNG stores 16-bit samples big-endian.
            buffer[2 * i] = static_cast<png_byte>(r.samples[i] >> 8);
            buffer[2 * i + 1] = static_cast<png_byte>(r.samples[i] & 0xff);
        }
    }
    std::vector<png_bytep> rows(r.height);
    for (std::uint32_t y = 0; y < r.height; ++y) {
        rows[y] = buffer.data() + y * row_samples * bytes_per_sample;
    }

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    if (!encode(fp.get(), r, rows.data())) {
        fp.reset();
        std::remove(path.c_str());
        throw IoError("PNG encoding failed for " + path.string());
    }
    if (std::fflush(fp.get()) != 0) {
        throw IoError("failed writing " + path.string());
    }
}

PngRaster read_png(const std::filesystem::path& path)
{
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) {
        throw IoError("cannot open " + path.string());
    }
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw FormatError(path.string() + ": not a PNG file");
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_sink, warning_sink);
    if (!png) {
        throw Error("libpng initialisation failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("libpng initialisation failed");
    }
    png_set_sig_bytes(png, 8);

    Header h;
    if (!decode_header(png, info, fp.get(), h)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path.string() + ": malformed PNG header");
    }
    const bool supported = (h.bit_depth == 8 || h.bit_depth == 16) &&
                           (h.color_type == PNG_COLOR_TYPE_RGB || h.color_type == PNG_COLOR_TYPE_RGB_ALPHA) &&
                           h.interlace == PNG_INTERLACE_NONE;
    if (!supported) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path.string() + ": only non-interlaced 8/16-bit RGB(A) PNG is supported");
    }

    PngRaster r;
    r.width = h.width;
    r.height = h.height;
    r.bit_depth = h.bit_depth;
    r.channels = h.color_type == PNG_COLOR_TYPE_RGB_ALPHA ? 4 : 3;

    const std::size_t bytes_per_sample = r.bit_depth / 8;
    const std::size_t row_bytes = static_cast<std::size_t>(r.width) * r.channels * bytes_per_sample;
    std::vector<png_byte> buffer(row_bytes * r.height);
    std::vector<png_bytep> rows(r.height);
    for (std::uint32_t y = 0; y < r.height; ++y) {
        rows[y] = buffer.data() + y * row_bytes;
    }
    const bool ok = decode_rows(png, info, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    if (!ok) {
        throw FormatError(path.string() + ": corrupt PNG data");
    }

    r.samples.resize(buffer.size() / bytes_per_sample);
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        r.samples[i] = bytes_per_sample == 1
                           ? buffer[i]
                           : static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    }
    return r;
}

} // namespace cubeviz
