#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "xrf/dataset.h"

namespace xrf {

/// Desk-scale stand-in for the radiograph corpus.
///
/// Each disease class owns a fixed location in the left half of the image;
/// a positive sample gets a bright disc there and at the mirrored location,
/// so horizontal flips preserve labels. "No Finding" samples carry no discs.
struct SynthConfig {
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    std::int64_t height = 64;
    std::int64_t width = 64;
    /// Probability that a sample is "No Finding".
    double no_finding_rate = 0.5;
    /// Relative frequency of each disease among diseased samples.
    std::array<double, kNumDiseases> disease_weights = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
    /// Diseased samples carry 1..max_diseases findings (uniform count).
    int max_diseases = 3;
    double noise = 0.04;
    double disc_intensity = 0.5;

    void validate() const;
};

struct DiscCenter {
    double y;
    double x;
};

/// Planted feature location of each disease (left-half disc) for an image size.
std::array<DiscCenter, kNumDiseases> planted_centers(std::int64_t height, std::int64_t width);
double planted_radius(std::int64_t height, std::int64_t width);

/// Deterministic in (config); image ids are `synth_<seed>_<index>.png`.
std::vector<LabeledSample> synthesize_dataset(const SynthConfig& config);
std::vector<LabeledSample> synthesize_dataset(std::size_t n, std::uint64_t seed);

}  // namespace xrf
