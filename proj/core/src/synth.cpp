#include "xrf/synth.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xrf/error.h"
#include "xrf/rng.h"

namespace xrf {

void SynthConfig::validate() const {
    if (n < 1) throw ConfigError("synthetic dataset size must be at least 1");
    if (height < 16 || width < 16) throw ConfigError("synthetic images must be at least 16x16");
    if (!(no_finding_rate >= 0.0 && no_finding_rate <= 1.0)) throw ConfigError("no_finding_rate must lie in [0, 1]");
    if (max_diseases < 1 || max_diseases > static_cast<int>(kNumDiseases)) {
        throw ConfigError("max_diseases must lie in [1, 14]");
    }
    double total = 0.0;
    for (double w : disease_weights) {
        if (!(w >= 0.0)) throw ConfigError("disease weights must be non-negative");
        total += w;
    }
    if (!(total > 0.0)) throw ConfigError("at least one disease weight must be positive");
}

// Five rows by three columns of cells covering the left half; the last cell is
// unused.
std::array<DiscCenter, kNumDiseases> planted_centers(std::int64_t height, std::int64_t width) {
    std::array<DiscCenter, kNumDiseases> centers{};
    const double cell_h = static_cast<double>(height) / 5.0;
    const double cell_w = static_cast<double>(width) / 6.0;
    for (std::size_t i = 0; i < kNumDiseases; ++i) {
        const auto row = static_cast<double>(i / 3);
        const auto col = static_cast<double>(i % 3);
        centers[i] = {(row + 0.5) * cell_h, (col + 0.5) * cell_w};
    }
    return centers;
}

double planted_radius(std::int64_t height, std::int64_t width) {
    return 0.045 * static_cast<double>(std::min(height, width));
}

std::vector<LabeledSample> synthesize_dataset(const SynthConfig& config) {
    config.validate();
    const auto centers = planted_centers(config.height, config.width);
    const double radius = planted_radius(config.height, config.width);
    std::vector<LabeledSample> out;
    out.reserve(config.n);
    for (std::size_t i = 0; i < config.n; ++i) {
        auto rng = make_rng(config.seed, "synth", i);
        LabeledSample s;
        s.image_id = "synth_" + std::to_string(config.seed) + "_" + std::to_string(i) + ".png";

        if (uniform01(rng) < config.no_finding_rate) {
            s.labels[kNoFindingIndex] = 1.0;
        } else {
            const int count = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(config.max_diseases)));
            auto weights = config.disease_weights;
            for (int k = 0; k < count; ++k) {
                const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
                if (total <= 0.0) break;
                double r = uniform01(rng) * total;
                std::size_t pick = 0;
                while (pick + 1 < kNumDiseases && (r >= weights[pick] || weights[pick] == 0.0)) {
                    r -= weights[pick];
                    ++pick;
                }
                s.labels[pick] = 1.0;
                weights[pick] = 0.0;
            }
        }

        // Soft vertical gradient plus per-sample brightness and pixel noise.
        const double base = 0.2 + 0.1 * uniform01(rng);
        Image gray(1, config.height, config.width);
        for (std::int64_t y = 0; y < config.height; ++y)
            for (std::int64_t x = 0; x < config.width; ++x) {
                const double gradient = 0.15 * static_cast<double>(y) / static_cast<double>(config.height);
                gray.at(0, y, x) = base + gradient + config.noise * normal(rng);
            }
        for (std::size_t d = 0; d < kNumDiseases; ++d) {
            if (s.labels[d] == 0.0) continue;
            const double cy = centers[d].y;
            for (const double cx : {centers[d].x, static_cast<double>(config.width) - centers[d].x}) {
                for (std::int64_t y = 0; y < config.height; ++y)
                    for (std::int64_t x = 0; x < config.width; ++x) {
                        const double dy = static_cast<double>(y) + 0.5 - cy;
                        const double dx = static_cast<double>(x) + 0.5 - cx;
                        if (dx * dx + dy * dy <= radius * radius) gray.at(0, y, x) += config.disc_intensity;
                    }
            }
        }
        for (auto& v : gray.pixels) v = std::clamp(v, 0.0, 1.0);
        s.image = to_rgb(gray);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<LabeledSample> synthesize_dataset(std::size_t n, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n = n;
    cfg.seed = seed;
    return synthesize_dataset(cfg);
}

}  // namespace xrf
