#pragma once

#include <cstdint>

#include "clfa/core/rng.hpp"
#include "clfa/synth/image.hpp"

namespace clfa::synth {

struct GeneratorConfig {
    int image_size = 64;
};

// Latent generative parameters, each U(0,1). Labels and rendering are both
// deterministic functions of these, which is what makes image -> label
// learnable.
struct Latents {
    double tortuosity = 0;
    double disc_pallor = 0;
    double vessel_density = 0;
    double pigmentation = 0;
    double vessel_width = 0;
    double cup_ratio = 0;
    double fundus_radius = 0;
    double background_texture = 0;

    static Latents sample(core::Rng& rng);
};

struct LabelSet {
    float who_cvd_log = 0;
    float age = 0, sbp = 0, tc = 0, bmi = 0;  // z-normalized
    int gender = 0, smoking = 0, diabetes = 0;
};

// who_cvd_log = 0.2 + 1.5*tortuosity + 0.4*disc_pallor + 0.3*vessel_density
//             + 0.15*tortuosity*disc_pallor
// regression labels 2-5 are affine latent mixes z-normalized with their exact
// closed-form mean/std; binaries threshold latents at the U(0,1) median 0.5.
LabelSet labels_from_latents(const Latents& l);

struct PatientRecord {
    long long patient_id = 0;
    Image left, right;
    LabelSet labels;
};

// Renders one eye: circular fundus disc, optic disc (geometry mirrored for
// the left eye), 3-5 branching vessels with tortuosity-driven wiggle, plus a
// small per-eye brightness/tint/phase nuisance drawn from eye_seed.
Image render_eye(const Latents& l, uint64_t eye_seed, bool left_eye, int image_size);

Latents latents_for_seed(uint64_t seed);
PatientRecord generate_patient(uint64_t seed, const GeneratorConfig& cfg);

}  // namespace clfa::synth
