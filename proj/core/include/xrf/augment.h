#pragma once

#include <cstdint>
#include <random>

#include "xrf/dataset.h"
#include "xrf/image.h"

namespace xrf {

struct AugmentationConfig {
    std::int64_t height = 224;
    std::int64_t width = 224;
    double hflip_prob = 0.5;
    double rotation_max_degrees = 10.0;
    std::uint64_t seed = 0;

    /// Throws ConfigError for non-positive sizes, probabilities outside
    /// [0,1], or rotation bounds outside [0, 180].
    void validate() const;
};

Image hflip(const Image& image);

/// Rotates about the image centre (counter-clockwise for positive angles in
/// display coordinates) with bilinear sampling; samples falling outside the
/// source are zero.
Image rotate(const Image& image, double degrees);

/// resize -> horizontal flip with probability hflip_prob -> rotation by a
/// uniform angle in [-max, max]. Labels are untouched.
LabeledSample augment(const LabeledSample& sample, const AugmentationConfig& cfg, std::mt19937_64& rng);

}  // namespace xrf
