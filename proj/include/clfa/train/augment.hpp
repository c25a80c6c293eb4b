#pragma once

#include <cstdint>

#include "clfa/synth/image.hpp"

namespace clfa::train {

struct AugmentConfig {
    bool resize = false;
    bool crop = false;
    bool color_jitter = false;
    bool grayscale = false;

    double crop_scale_min = 0.8;  // crop window side as a fraction of the image
    double zoom_min = 0.9, zoom_max = 1.1;
    double jitter_strength = 0.2;  // per-channel gain in [1-s, 1+s]
    double grayscale_prob = 0.1;

    bool any() const { return resize || crop || color_jitter || grayscale; }
};

// Deterministic per seed. Ops apply in the order resize (center zoom), crop
// (random window, resampled back to full size), color jitter, grayscale;
// parameters are drawn only for enabled ops, in that order.
synth::Image apply_augmentations(const synth::Image& img, const AugmentConfig& cfg, uint64_t seed);

}  // namespace clfa::train
