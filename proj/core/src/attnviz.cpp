#include "xrf/attnviz.h"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "xrf/error.h"
#include "xrf/kvconfig.h"

namespace xrf {

std::vector<double> attention_salience(const Tensor& attention, std::int64_t item) {
    if (!attention.defined()) throw DataError("no cached attention weights; run a forward pass first");
    if (attention.rank() != 4 || attention.dim(2) != attention.dim(3)) {
        throw DimensionError("attention weights must be [N,h,T,T], got " + shape_str(attention.shape()));
    }
    const auto n = attention.dim(0), heads = attention.dim(1), tokens = attention.dim(2);
    if (item < 0 || item >= n) throw std::out_of_range("attention batch item out of range");
    const auto a = attention.data();
    std::vector<double> salience(static_cast<std::size_t>(tokens), 0.0);
    const auto base = static_cast<std::size_t>(item * heads * tokens * tokens);
    for (std::int64_t h = 0; h < heads; ++h)
        for (std::int64_t q = 0; q < tokens; ++q) {
            const auto row = base + static_cast<std::size_t>((h * tokens + q) * tokens);
            for (std::int64_t k = 0; k < tokens; ++k) salience[static_cast<std::size_t>(k)] += a[row + static_cast<std::size_t>(k)];
        }
    const double denom = static_cast<double>(heads * tokens);
    for (auto& s : salience) s /= denom;
    return salience;
}

std::vector<double> upsample_grid(const std::vector<double>& grid, std::int64_t grid_height, std::int64_t grid_width,
                                  std::int64_t height, std::int64_t width) {
    if (grid_height < 1 || grid_width < 1 || static_cast<std::int64_t>(grid.size()) != grid_height * grid_width) {
        throw DimensionError("attention grid does not match its extents");
    }
    Image g(1, grid_height, grid_width);
    g.pixels = grid;
    return resize_bilinear(g, height, width).pixels;
}

AttentionMap attention_map(const Tensor& attention, std::int64_t grid_height, std::int64_t grid_width,
                           std::int64_t height, std::int64_t width) {
    AttentionMap map;
    map.grid = attention_salience(attention);
    if (static_cast<std::int64_t>(map.grid.size()) != grid_height * grid_width) {
        throw DimensionError("token count " + std::to_string(map.grid.size()) + " does not match a " +
                             std::to_string(grid_height) + "x" + std::to_string(grid_width) + " grid");
    }
    map.grid_height = grid_height;
    map.grid_width = grid_width;
    map.height = height;
    map.width = width;
    map.upsampled = upsample_grid(map.grid, grid_height, grid_width, height, width);
    const double peak = *std::max_element(map.upsampled.begin(), map.upsampled.end());
    if (peak > 0.0) {
        for (auto& v : map.upsampled) v /= peak;
    }
    return map;
}

AttentionMap extract_attention(Model& model, const Image& image) {
    MultiHeadAttention* layer = model.last_attention_layer();
    if (!is_vit_family(model.family()) || layer == nullptr) {
        throw UnsupportedFamilyError("unsupported family '" + std::string(family_name(model.family())) +
                                     "': attention maps need a transformer model");
    }
    const auto& spec = model.spec();
    const Image input = resize_bilinear(to_rgb(image), spec.height, spec.width);
    const Tensor x = Tensor::from({1, input.channels, input.height, input.width}, input.pixels);
    model.predict(x);
    return attention_map(layer->last_attention(), model.token_grid_height(), model.token_grid_width(), spec.height,
                         spec.width);
}

Image render_heatmap(const AttentionMap& map, const Image& image, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
    if (map.grid.empty()) throw DimensionError("attention grid is empty");
    const Image base = to_rgb(image);
    if (alpha == 0.0) return base;
    auto heat = upsample_grid(map.grid, map.grid_height, map.grid_width, base.height, base.width);
    const auto [lo_it, hi_it] = std::minmax_element(heat.begin(), heat.end());
    const double lo = *lo_it, hi = *hi_it;
    for (auto& v : heat) v = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    Image out = base;
    const auto plane = static_cast<std::size_t>(base.height * base.width);
    for (std::size_t i = 0; i < plane; ++i) {
        const auto color = heat_color(heat[i]);
        for (std::size_t c = 0; c < 3; ++c) {
            auto& px = out.pixels[c * plane + i];
            px = (1.0 - alpha) * px + alpha * (static_cast<double>(color[c]) / 255.0);
        }
    }
    return out;
}

void write_grid_csv(const std::filesystem::path& path, const AttentionMap& map) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (std::int64_t r = 0; r < map.grid_height; ++r) {
        for (std::int64_t c = 0; c < map.grid_width; ++c) {
            if (c) out << ',';
            out << format_double(map.grid[static_cast<std::size_t>(r * map.grid_width + c)]);
        }
        out << '\n';
    }
}

}  // namespace xrf
