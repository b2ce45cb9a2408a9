#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "../support/desk.h"
#include "xrf/attnviz.h"
#include "xrf/error.h"
#include "xrf/rng.h"

using namespace xrf;
using xrf::testing::desk_spec;
namespace fs = std::filesystem;

namespace {

Image random_image(std::int64_t h, std::int64_t w, std::uint64_t seed) {
    auto rng = make_rng(seed, "img");
    Image img(3, h, w);
    for (auto& v : img.pixels) v = uniform01(rng);
    return img;
}

Tensor uniform_attention(std::int64_t heads, std::int64_t tokens) {
    return Tensor::full({1, heads, tokens, tokens}, 1.0 / static_cast<double>(tokens));
}

}  // namespace

TEST(Salience, UniformAttention) {
    const auto s = attention_salience(uniform_attention(4, 49));
    for (double v : s) EXPECT_NEAR(v, 1.0 / 49.0, 1e-15);
    const auto one = attention_salience(Tensor::full({1, 2, 1, 1}, 1.0));
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0], 1.0);
}

TEST(Salience, SumsToOneAndHeadPermutationInvariant) {
    Model m = build_model(desk_spec(Family::vit_v1_32, 96));
    const auto map = extract_attention(m, random_image(96, 96, 1));
    ASSERT_EQ(map.grid.size(), 9u);
    double total = 0.0;
    for (double v : map.grid) {
        EXPECT_GE(v, 0.0);
        total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);

    const auto& a = m.last_attention_layer()->last_attention();
    const auto heads = a.dim(1), t = a.dim(2);
    std::vector<double> swapped(a.data().begin(), a.data().end());
    const auto plane = static_cast<std::size_t>(t * t);
    for (std::int64_t h = 0; h < heads; ++h)
        std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(h)), plane,
                    swapped.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<std::size_t>(heads - 1 - h)));
    const auto s2 = attention_salience(Tensor::from(a.shape(), swapped));
    for (std::size_t i = 0; i < s2.size(); ++i) EXPECT_NEAR(s2[i], map.grid[i], 1e-15);
}

TEST(Salience, UniformAttentionFromModel) {
    Model m = build_model(desk_spec(Family::vit_v2_32, 224));
    auto* layer = m.last_attention_layer();
    std::fill(layer->wq().mutable_data().begin(), layer->wq().mutable_data().end(), 0.0);
    std::fill(layer->wk().mutable_data().begin(), layer->wk().mutable_data().end(), 0.0);
    const auto map = extract_attention(m, random_image(224, 224, 2));
    EXPECT_EQ(map.grid_height, 7);
    EXPECT_EQ(map.grid_width, 7);
    for (double v : map.grid) EXPECT_NEAR(v, 1.0 / 49.0, 1e-12);
    EXPECT_EQ(map.height, 224);
    EXPECT_EQ(*std::max_element(map.upsampled.begin(), map.upsampled.end()), 1.0);
}

TEST(Extract, NonVitRejected) {
    Model m = build_model(desk_spec(Family::cnn));
    EXPECT_THROW(extract_attention(m, random_image(64, 64, 1)), UnsupportedFamilyError);
}

TEST(Extract, HybridGrid) {
    Model m = build_model(desk_spec(Family::vit_resnet_16, 64));
    const auto map = extract_attention(m, random_image(80, 80, 3));
    EXPECT_EQ(map.grid_height, 4);
    EXPECT_EQ(map.grid_width, 4);
    EXPECT_EQ(map.upsampled.size(), 64u * 64u);
}

TEST(Upsample, OneHotArgmaxStaysInCell) {
    for (std::int64_t g : {2, 3, 7}) {
        for (std::int64_t cell = 0; cell < g * g; ++cell) {
            std::vector<double> grid(static_cast<std::size_t>(g * g), 0.0);
            grid[static_cast<std::size_t>(cell)] = 1.0;
            const std::int64_t size = 224;
            const auto up = upsample_grid(grid, g, g, size, size);
            const auto arg = std::max_element(up.begin(), up.end()) - up.begin();
            const auto py = arg / size, px = arg % size;
            const double ch = static_cast<double>(size) / static_cast<double>(g);
            EXPECT_EQ(static_cast<std::int64_t>(static_cast<double>(py) / ch), cell / g);
            EXPECT_EQ(static_cast<std::int64_t>(static_cast<double>(px) / ch), cell % g);
        }
    }
}

TEST(Render, AlphaZeroIsIdentity) {
    const auto img = random_image(20, 30, 4);
    AttentionMap map;
    map.grid_height = 2;
    map.grid_width = 2;
    map.grid = {0.1, 0.2, 0.3, 0.4};
    EXPECT_EQ(render_heatmap(map, img, 0.0), img);
    EXPECT_THROW(render_heatmap(map, img, 1.5), std::invalid_argument);
}

TEST(Render, ConstantGridIsMidRampTint) {
    const Image gray(1, 10, 10, 0.5);
    AttentionMap map;
    map.grid_height = map.grid_width = 3;
    map.grid.assign(9, 1.0 / 9.0);
    const auto out = render_heatmap(map, gray, 0.4);
    const auto mid = heat_color(0.5);
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < 10; ++y)
            for (std::int64_t x = 0; x < 10; ++x)
                EXPECT_NEAR(out.at(c, y, x), 0.6 * 0.5 + 0.4 * mid[static_cast<std::size_t>(c)] / 255.0, 1e-12);
}

TEST(Render, RampIsMonotoneBlueToRed) {
    const auto lo = heat_color(0.0), hi = heat_color(1.0);
    EXPECT_EQ(lo[0], 0);
    EXPECT_EQ(lo[2], 255);
    EXPECT_EQ(hi[0], 255);
    EXPECT_EQ(hi[2], 0);
    for (int i = 1; i < 256; ++i) {
        const auto a = heat_color((i - 1) / 255.0), b = heat_color(i / 255.0);
        EXPECT_GE(b[0], a[0]);
        EXPECT_LE(b[2], a[2]);
    }
}

TEST(Render, DeterministicAndFilesWritten) {
    Model m = build_model(desk_spec(Family::vit_v1_32, 64));
    const auto img = random_image(64, 64, 5);
    const auto map = extract_attention(m, img);
    const auto a = render_heatmap(map, img), b = render_heatmap(map, img);
    EXPECT_EQ(a, b);
    const fs::path dir = fs::temp_directory_path() / "xrf_unit" / "attn";
    fs::create_directories(dir);
    write_grid_csv(dir / "g.csv", map);
    std::ifstream in(dir / "g.csv");
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 1);
    }
    EXPECT_EQ(rows, 2);
}
