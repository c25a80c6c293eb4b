#include "clfa/synth/generator.hpp"

#include <algorithm>
#include <cmath>

#include "clfa/core/errors.hpp"
#include "clfa/synth/camera.hpp"

namespace clfa::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

float clip01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

float soft_disk(float dist_px, float radius_px, float edge_px) {
    return clip01((radius_px - dist_px) / edge_px + 0.5f);
}

struct EyeNuisance {
    float brightness;
    float tint[3];
    double texture_phase;
    double vessel_jitter[8];
};

EyeNuisance draw_nuisance(uint64_t eye_seed) {
    core::Rng rng(eye_seed);
    EyeNuisance n;
    n.brightness = float(0.97 + 0.06 * rng.uniform());
    for (int c = 0; c < 3; ++c) n.tint[c] = float(-0.03 + 0.06 * rng.uniform());
    n.texture_phase = 2.0 * kPi * rng.uniform();
    for (auto& j : n.vessel_jitter) j = 0.3 * (rng.uniform() - 0.5);
    return n;
}

struct VesselPainter {
    Image& img;
    float cx_px, cy_px, rf_px;

    void stamp(float px, float py, float w) {
        const int x0 = std::max(0, int(px - w - 1.5f));
        const int x1 = std::min(img.w - 1, int(px + w + 1.5f));
        const int y0 = std::max(0, int(py - w - 1.5f));
        const int y1 = std::min(img.h - 1, int(py + w + 1.5f));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const float dx = float(x) + 0.5f - px;
                const float dy = float(y) + 0.5f - py;
                const float d = std::sqrt(dx * dx + dy * dy);
                const float a = clip01(w + 0.5f - d) * 0.85f;
                if (a <= 0.0f) continue;
                float* p = &img.at(y, x, 0);
                p[0] += a * (0.30f - p[0]);
                p[1] += a * (0.05f - p[1]);
                p[2] += a * (0.05f - p[2]);
            }
    }

    void march(float sx, float sy, double theta, double length_px, float width, double amp,
               double freq, double phase, int depth, double branch_sign) {
        const double ds = 0.5;
        const int nsteps = std::max(4, int(length_px / ds));
        const int branch_at = int(0.45 * nsteps);
        double x = sx, y = sy;
        for (int s = 0; s <= nsteps; ++s) {
            const double t = double(s) / nsteps;
            const double th = theta + amp * std::sin(2.0 * kPi * freq * t + phase);
            x += ds * std::cos(th);
            y += ds * std::sin(th);
            const float ddx = float(x) - cx_px, ddy = float(y) - cy_px;
            if (std::sqrt(ddx * ddx + ddy * ddy) > 0.93f * rf_px) return;
            stamp(float(x), float(y), width * float(1.0 - 0.35 * t));
            if (depth > 0 && s == branch_at)
                march(float(x), float(y), th + branch_sign * 0.55, length_px * 0.55, width * 0.7f,
                      amp, freq * 1.3, phase + 1.9, depth - 1, -branch_sign);
        }
    }
};

}  // namespace

Latents Latents::sample(core::Rng& rng) {
    Latents l;
    l.tortuosity = rng.uniform();
    l.disc_pallor = rng.uniform();
    l.vessel_density = rng.uniform();
    l.pigmentation = rng.uniform();
    l.vessel_width = rng.uniform();
    l.cup_ratio = rng.uniform();
    l.fundus_radius = rng.uniform();
    l.background_texture = rng.uniform();
    return l;
}

LabelSet labels_from_latents(const Latents& l) {
    auto znorm = [](double raw, double mu, double var) {
        return float((raw - mu) / std::sqrt(var));
    };
    LabelSet s;
    s.who_cvd_log = float(0.2 + 1.5 * l.tortuosity + 0.4 * l.disc_pallor +
                          0.3 * l.vessel_density + 0.15 * l.tortuosity * l.disc_pallor);
    s.age = znorm(0.8 * l.pigmentation + 0.2 * l.tortuosity, 0.5, (0.64 + 0.04) / 12.0);
    s.sbp = znorm(0.6 * l.tortuosity + 0.4 * l.vessel_width, 0.5, (0.36 + 0.16) / 12.0);
    s.tc = znorm(0.7 * l.disc_pallor + 0.3 * l.background_texture, 0.5, (0.49 + 0.09) / 12.0);
    s.bmi = znorm(0.5 * l.vessel_density + 0.5 * l.cup_ratio, 0.5, (0.25 + 0.25) / 12.0);
    s.gender = l.pigmentation >= 0.5 ? 1 : 0;
    s.smoking = l.background_texture >= 0.5 ? 1 : 0;
    s.diabetes = l.cup_ratio >= 0.5 ? 1 : 0;
    return s;
}

Image render_eye(const Latents& l, uint64_t eye_seed, bool left_eye, int image_size) {
    if (image_size < 32) throw ConfigError("generator: image_size must be >= 32");
    const int S = image_size;
    const EyeNuisance nui = draw_nuisance(eye_seed);

    Image img(S, S);
    const float rf = float(0.40 + 0.06 * l.fundus_radius);  // fundus radius, normalized
    const float od_r = 0.075f;
    const float odx = 0.5f + 0.55f * rf;  // canonical right-eye geometry, mirrored at the end
    const float ody = 0.5f;
    const float fr = float(0.60 - 0.22 * l.pigmentation);
    const float fg = float(0.34 - 0.14 * l.pigmentation);
    const float fb = float(0.20 - 0.10 * l.pigmentation);
    const float od_col[3] = {clip01(float(0.82 + 0.15 * l.disc_pallor)),
                             clip01(float(0.72 + 0.22 * l.disc_pallor)),
                             clip01(float(0.40 + 0.45 * l.disc_pallor))};
    const float cup_r = od_r * float(0.25 + 0.45 * l.cup_ratio);

    const float edge = 1.5f / S;  // soft edges in normalized units
    for (int y = 0; y < S; ++y) {
        const float v = (float(y) + 0.5f) / S;
        for (int x = 0; x < S; ++x) {
            const float u = (float(x) + 0.5f) / S;
            const float d = std::sqrt((u - 0.5f) * (u - 0.5f) + (v - 0.5f) * (v - 0.5f));
            const float af = soft_disk(d, rf, edge);

            const float shade = 1.0f - 0.30f * (d / rf) * (d / rf);
            const float tex =
                float(0.025 * l.background_texture *
                          std::sin(2.0 * kPi * (3.0 * u + 5.0 * v) + nui.texture_phase) +
                      0.015 * l.background_texture *
                          std::sin(2.0 * kPi * (7.0 * u - 2.0 * v) + 1.7 * nui.texture_phase));
            float col[3] = {fr * shade + tex, fg * shade + tex, fb * shade + tex};

            const float dod = std::sqrt((u - odx) * (u - odx) + (v - ody) * (v - ody));
            const float aod = soft_disk(dod, od_r, edge * 0.8f);
            const float acup = soft_disk(dod, cup_r, edge * 0.8f);
            for (int c = 0; c < 3; ++c) {
                col[c] += aod * (od_col[c] - col[c]);
                const float cup_c = clip01(od_col[c] * 1.12f + 0.03f);
                col[c] += acup * (cup_c - col[c]);
                const float outside = 0.02f;
                img.at(y, x, c) = outside + af * (col[c] - outside);
            }
        }
    }

    VesselPainter painter{img, 0.5f * S, 0.5f * S, rf * S};
    const int nv = 3 + std::min(2, int(l.vessel_density * 3.0));
    const float w0 = float(0.9 + 1.4 * l.vessel_width);
    const double amp = 0.05 + 0.5 * l.tortuosity;
    for (int k = 0; k < nv; ++k) {
        // fan out from the optic disc across the fundus (toward -x)
        const double span = 0.62 * kPi;
        const double theta = kPi + (double(k) - 0.5 * (nv - 1)) / std::max(1, nv - 1) * span;
        const double phase = 2.0 * kPi * std::fmod(0.618 * (k + 1) + l.tortuosity, 1.0) +
                             nui.vessel_jitter[k % 8];
        const double freq = 2.0 + 0.6 * std::fmod(0.37 * (k + 1), 1.0);
        painter.march(odx * S, ody * S, theta, 1.55 * rf * S, w0, amp, freq, phase, 1,
                      k % 2 == 0 ? 1.0 : -1.0);
    }

    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = clip01(img.at(y, x, c) * nui.brightness + nui.tint[c]);

    if (left_eye) {
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S / 2; ++x)
                for (int c = 0; c < 3; ++c) std::swap(img.at(y, x, c), img.at(y, S - 1 - x, c));
    }
    return img;
}

Latents latents_for_seed(uint64_t seed) {
    core::Rng rng(core::derive_seed(seed, 0xA11));
    return Latents::sample(rng);
}

PatientRecord generate_patient(uint64_t seed, const GeneratorConfig& cfg) {
    if (cfg.image_size < 32) throw ConfigError("generator: image_size must be >= 32");
    PatientRecord rec;
    rec.patient_id = (long long)seed;
    const Latents l = latents_for_seed(seed);
    rec.labels = labels_from_latents(l);
    rec.right = render_eye(l, core::derive_seed(seed, 1), false, cfg.image_size);
    rec.left = render_eye(l, core::derive_seed(seed, 2), true, cfg.image_size);
    return rec;
}

// ---- camera pipeline ----

void validate_profile(const CameraProfile& p) {
    const auto& m = p.color_matrix;
    const double det = double(m[0]) * (double(m[4]) * m[8] - double(m[5]) * m[7]) -
                       double(m[1]) * (double(m[3]) * m[8] - double(m[5]) * m[6]) +
                       double(m[2]) * (double(m[3]) * m[7] - double(m[4]) * m[6]);
    if (std::fabs(det) < 1e-8) throw ConfigError("camera: color_matrix is singular");
    if (!(p.gamma > 0.0f)) throw ConfigError("camera: gamma must be > 0");
    if (p.blur_sigma < 0.0f) throw ConfigError("camera: blur_sigma must be >= 0");
    if (p.noise_sigma < 0.0f) throw ConfigError("camera: noise_sigma must be >= 0");
    if (p.vignette_strength < 0.0f || p.vignette_strength > 1.0f)
        throw ConfigError("camera: vignette_strength must be in [0,1]");
}

bool profile_equal(const CameraProfile& a, const CameraProfile& b) {
    return a.color_matrix == b.color_matrix && a.blur_sigma == b.blur_sigma &&
           a.vignette_strength == b.vignette_strength && a.gamma == b.gamma &&
           a.noise_sigma == b.noise_sigma && a.seed_offset == b.seed_offset;
}

namespace {

bool identity_matrix(const std::array<float, 9>& m) {
    static const std::array<float, 9> id = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return m == id;
}

void blur_separable(Image& img, float sigma) {
    const int radius = std::max(1, int(std::ceil(3.0f * sigma)));
    std::vector<double> k(size_t(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        k[size_t(i + radius)] = std::exp(-0.5 * double(i) * i / (double(sigma) * sigma));
        sum += k[size_t(i + radius)];
    }
    for (auto& v : k) v /= sum;

    const int H = img.h, W = img.w;
    Image tmp(H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = std::clamp(x + i, 0, W - 1);
                    acc += k[size_t(i + radius)] * img.at(y, xx, c);
                }
                tmp.at(y, x, c) = float(acc);
            }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    const int yy = std::clamp(y + i, 0, H - 1);
                    acc += k[size_t(i + radius)] * tmp.at(yy, x, c);
                }
                img.at(y, x, c) = float(acc);
            }
}

}  // namespace

Image apply_camera_profile(const Image& img, const CameraProfile& profile, uint64_t seed) {
    validate_profile(profile);
    Image out = img;

    if (!identity_matrix(profile.color_matrix)) {
        const auto& m = profile.color_matrix;
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) {
                const float r = out.at(y, x, 0), g = out.at(y, x, 1), b = out.at(y, x, 2);
                out.at(y, x, 0) = m[0] * r + m[1] * g + m[2] * b;
                out.at(y, x, 1) = m[3] * r + m[4] * g + m[5] * b;
                out.at(y, x, 2) = m[6] * r + m[7] * g + m[8] * b;
            }
    }
    if (profile.blur_sigma > 0.0f) blur_separable(out, profile.blur_sigma);
    if (profile.vignette_strength > 0.0f) {
        const float cx = 0.5f * (out.w - 1), cy = 0.5f * (out.h - 1);
        const float rmax2 = cx * cx + cy * cy;
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) {
                const float r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                const float f = 1.0f - profile.vignette_strength * (r2 / rmax2);
                for (int c = 0; c < 3; ++c) out.at(y, x, c) *= f;
            }
    }
    if (profile.gamma != 1.0f) {
        // negative intermediates (possible after an aggressive color matrix)
        // are clamped to 0 before pow
        for (auto& v : out.px) v = std::pow(v < 0.0f ? 0.0f : v, profile.gamma);
    }
    if (profile.noise_sigma > 0.0f) {
        core::Rng rng(core::derive_seed(seed, uint64_t(profile.seed_offset)));
        for (auto& v : out.px) v += profile.noise_sigma * float(rng.normal());
    }
    for (auto& v : out.px) v = clip01(v);
    return out;
}

}  // namespace clfa::synth
