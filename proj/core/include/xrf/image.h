#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace xrf {

/// Planar (CHW) float64 image, values nominally in [0, 1].
struct Image {
    std::int64_t channels = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(std::int64_t c, std::int64_t h, std::int64_t w, double fill = 0.0)
        : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c * h * w), fill) {}

    double& at(std::int64_t c, std::int64_t y, std::int64_t x) {
        return pixels[static_cast<std::size_t>((c * height + y) * width + x)];
    }
    double at(std::int64_t c, std::int64_t y, std::int64_t x) const {
        return pixels[static_cast<std::size_t>((c * height + y) * width + x)];
    }

    bool operator==(const Image&) const = default;
};

/// Decodes an 8- or 16-bit grayscale/RGB PNG (alpha and palettes are
/// expanded or stripped) at native size, scaled to [0, 1]. Returns 1 or 3
/// channels. Throws DataError naming the path on failure.
Image read_png(const std::filesystem::path& path);

/// Writes 1- or 3-channel images as 8-bit PNG; values are clamped to [0, 1]
/// and rounded.
void write_png(const Image& image, const std::filesystem::path& path);

/// Grayscale replicated to three channels; RGB passed through.
Image to_rgb(const Image& image);

/// Bilinear resampling with half-pixel centres and edge clamping.
Image resize_bilinear(const Image& image, std::int64_t height, std::int64_t width);

/// read_png + to_rgb + resize to the target extents.
Image load_image(const std::filesystem::path& path, std::int64_t height, std::int64_t width);

}  // namespace xrf
