#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "xrf/image.h"
#include "xrf/models.h"

namespace xrf {

struct AttentionMap {
    std::int64_t grid_height = 0;
    std::int64_t grid_width = 0;
    std::vector<double> grid;  // [Gh, Gw] row-major, per-key-token salience
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<double> upsampled;  // [H, W], divided by its maximum
};

/// Mean over heads, then over queries, of attention weights [N,h,T,T] for one
/// batch item. Returns T values summing to 1 when rows are stochastic.
std::vector<double> attention_salience(const Tensor& attention, std::int64_t item = 0);

/// Bilinear resize of a [Gh, Gw] grid to [H, W] (half-pixel centres).
std::vector<double> upsample_grid(const std::vector<double>& grid, std::int64_t grid_height, std::int64_t grid_width,
                                  std::int64_t height, std::int64_t width);

/// Builds the map from cached attention weights of a forward pass.
AttentionMap attention_map(const Tensor& attention, std::int64_t grid_height, std::int64_t grid_width,
                           std::int64_t height, std::int64_t width);

/// Runs the model on one image (resized to the model input) and extracts the
/// last encoder block's attention. Throws UnsupportedFamilyError for models
/// without attention.
AttentionMap extract_attention(Model& model, const Image& image);

/// Entry of the fixed 256-step blue-to-red ramp for a value in [0, 1].
std::array<std::uint8_t, 3> heat_color(double value);

/// Upsamples the grid to the image size, min-max normalises it (a constant
/// grid becomes 0.5 everywhere), maps it through the ramp and blends it over
/// the image: out = (1 - alpha) * image + alpha * color. Returns RGB.
Image render_heatmap(const AttentionMap& map, const Image& image, double alpha = 0.4);

/// Gh lines of Gw comma-separated values, no header.
void write_grid_csv(const std::filesystem::path& path, const AttentionMap& map);

}  // namespace xrf
