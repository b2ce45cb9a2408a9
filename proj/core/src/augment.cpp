#include "xrf/augment.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xrf/error.h"
#include "xrf/rng.h"

namespace xrf {

void AugmentationConfig::validate() const {
    if (height <= 0 || width <= 0) throw ConfigError("augmentation target size must be positive");
    if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw ConfigError("hflip_prob must lie in [0, 1]");
    if (!(rotation_max_degrees >= 0.0 && rotation_max_degrees <= 180.0)) {
        throw ConfigError("rotation_max_degrees must lie in [0, 180]");
    }
}

Image hflip(const Image& image) {
    Image out = image;
    for (std::int64_t c = 0; c < image.channels; ++c)
        for (std::int64_t y = 0; y < image.height; ++y)
            for (std::int64_t x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
    return out;
}

Image rotate(const Image& image, double degrees) {
    if (degrees == 0.0) return image;
    const double theta = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
    Image out(image.channels, image.height, image.width, 0.0);
    auto sample = [&](std::int64_t c, std::int64_t y, std::int64_t x) {
        if (y < 0 || y >= image.height || x < 0 || x >= image.width) return 0.0;
        return image.at(c, y, x);
    };
    for (std::int64_t y = 0; y < image.height; ++y) {
        for (std::int64_t x = 0; x < image.width; ++x) {
            // Inverse map: output pixel -> source location.
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double sx = cs * dx - sn * dy + cx;
            const double sy = sn * dx + cs * dy + cy;
            if (sx <= -1.0 || sy <= -1.0 || sx >= static_cast<double>(image.width) ||
                sy >= static_cast<double>(image.height)) {
                continue;
            }
            const auto x0 = static_cast<std::int64_t>(std::floor(sx));
            const auto y0 = static_cast<std::int64_t>(std::floor(sy));
            const double wx = sx - static_cast<double>(x0);
            const double wy = sy - static_cast<double>(y0);
            for (std::int64_t c = 0; c < image.channels; ++c) {
                const double top = (1.0 - wx) * sample(c, y0, x0) + wx * sample(c, y0, x0 + 1);
                const double bottom = (1.0 - wx) * sample(c, y0 + 1, x0) + wx * sample(c, y0 + 1, x0 + 1);
                out.at(c, y, x) = (1.0 - wy) * top + wy * bottom;
            }
        }
    }
    return out;
}

LabeledSample augment(const LabeledSample& sample, const AugmentationConfig& cfg, std::mt19937_64& rng) {
    LabeledSample out;
    out.image_id = sample.image_id;
    out.labels = sample.labels;
    out.image = resize_bilinear(sample.image, cfg.height, cfg.width);
    // Both draws happen unconditionally so the stream position does not depend
    // on the outcome.
    const bool flip = uniform01(rng) < cfg.hflip_prob;
    const double angle = uniform(rng, -cfg.rotation_max_degrees, cfg.rotation_max_degrees);
    if (flip) out.image = hflip(out.image);
    if (cfg.rotation_max_degrees > 0.0) out.image = rotate(out.image, angle);
    for (auto& v : out.image.pixels) v = std::clamp(v, 0.0, 1.0);
    return out;
}

}  // namespace xrf
