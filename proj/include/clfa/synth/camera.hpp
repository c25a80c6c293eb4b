#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "clfa/synth/image.hpp"

namespace clfa::synth {

// out = clip01( gamma( vignette( blur( color_matrix * img ))) + noise ).
// Neutral stages are skipped outright so a fully neutral profile is an exact
// identity (pow/blur would otherwise perturb last bits).
struct CameraProfile {
    std::array<float, 9> color_matrix = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
    float blur_sigma = 0.0f;
    float vignette_strength = 0.0f;
    float gamma = 1.0f;
    float noise_sigma = 0.0f;
    long long seed_offset = 0;
};

void validate_profile(const CameraProfile& p);
bool profile_equal(const CameraProfile& a, const CameraProfile& b);

Image apply_camera_profile(const Image& img, const CameraProfile& profile, uint64_t seed);

}  // namespace clfa::synth
