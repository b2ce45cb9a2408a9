#include "xrf/image.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "xrf/error.h"

namespace xrf {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw DataError("cannot open image " + path.string());

    png_byte signature[8];
    if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
        throw DataError("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("libpng initialisation failed for " + path.string());
    }
    // Locals touched after setjmp must not be modified between setjmp and longjmp.
    std::vector<png_bytep> rows;
    std::vector<png_byte> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("corrupt PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);  // little-endian samples
    png_read_update_info(png, info);

    const int out_channels = png_get_channels(png, info);
    const int out_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (out_channels != 1 && out_channels != 3) {
        throw DataError("unsupported PNG channel layout in " + path.string());
    }
    Image img(out_channels, height, width);
    const double scale = out_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    for (png_uint_32 y = 0; y < height; ++y) {
        const png_byte* row = rows[y];
        for (png_uint_32 x = 0; x < width; ++x) {
            for (int c = 0; c < out_channels; ++c) {
                const std::size_t s = static_cast<std::size_t>(x) * out_channels + c;
                const unsigned v = out_depth == 16 ? static_cast<unsigned>(row[2 * s] | (row[2 * s + 1] << 8)) : row[s];
                img.at(c, y, x) = v * scale;
            }
        }
    }
    return img;
}

void write_png(const Image& image, const std::filesystem::path& path) {
    if (image.channels != 1 && image.channels != 3) throw DataError("write_png supports 1 or 3 channels");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw DataError("cannot write image " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng initialisation failed for " + path.string());
    }
    const auto w = static_cast<std::size_t>(image.width);
    const auto c = static_cast<std::size_t>(image.channels);
    std::vector<png_byte> buffer(w * c * static_cast<std::size_t>(image.height));
    for (std::int64_t y = 0; y < image.height; ++y)
        for (std::int64_t x = 0; x < image.width; ++x)
            for (std::int64_t ch = 0; ch < image.channels; ++ch) {
                const double v = std::clamp(image.at(ch, y, x), 0.0, 1.0);
                buffer[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * c +
                       static_cast<std::size_t>(ch)] = static_cast<png_byte>(std::lround(v * 255.0));
            }
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
    for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = buffer.data() + y * w * c;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("failed writing PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image to_rgb(const Image& image) {
    if (image.channels == 3) return image;
    if (image.channels != 1) throw DataError("to_rgb expects 1 or 3 channels");
    Image out(3, image.height, image.width);
    const std::size_t plane = image.pixels.size();
    for (std::size_t c = 0; c < 3; ++c) std::copy(image.pixels.begin(), image.pixels.end(), out.pixels.begin() + c * plane);
    return out;
}

Image resize_bilinear(const Image& image, std::int64_t height, std::int64_t width) {
    if (height <= 0 || width <= 0) throw DataError("resize target must be positive");
    if (height == image.height && width == image.width) return image;
    Image out(image.channels, height, width);
    const double sy = static_cast<double>(image.height) / static_cast<double>(height);
    const double sx = static_cast<double>(image.width) / static_cast<double>(width);
    for (std::int64_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
        const auto y0 = static_cast<std::int64_t>(fy);
        const auto y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::int64_t x = 0; x < width; ++x) {
            const double fx =
                std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
            const auto x0 = static_cast<std::int64_t>(fx);
            const auto x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::int64_t c = 0; c < image.channels; ++c) {
                const double top = (1.0 - wx) * image.at(c, y0, x0) + wx * image.at(c, y0, x1);
                const double bottom = (1.0 - wx) * image.at(c, y1, x0) + wx * image.at(c, y1, x1);
                out.at(c, y, x) = (1.0 - wy) * top + wy * bottom;
            }
        }
    }
    return out;
}

Image load_image(const std::filesystem::path& path, std::int64_t height, std::int64_t width) {
    return resize_bilinear(to_rgb(read_png(path)), height, width);
}

}  // namespace xrf
