#include <clfa/train/augment.hpp>

#include <clfa/core/errors.hpp>
#include <clfa/core/rng.hpp>

#include <algorithm>
#include <cmath>

namespace clfa::train {

namespace {

float bilinear(const synth::Image& img, double y, double x, int c) {
    const int h = img.h, w = img.w;
    double yc = std::clamp(y, 0.0, double(h - 1));
    double xc = std::clamp(x, 0.0, double(w - 1));
    int y0 = int(yc), x0 = int(xc);
    int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    double fy = yc - y0, fx = xc - x0;
    double v00 = img.at(y0, x0, c), v01 = img.at(y0, x1, c);
    double v10 = img.at(y1, x0, c), v11 = img.at(y1, x1, c);
    return float((v00 * (1 - fx) + v01 * fx) * (1 - fy) + (v10 * (1 - fx) + v11 * fx) * fy);
}

// resample the window [ty, ty+win) x [tx, tx+win) back onto the full grid
synth::Image resample_window(const synth::Image& img, double ty, double tx, double win) {
    synth::Image out;
    out.h = img.h;
    out.w = img.w;
    out.px.resize(size_t(img.h) * size_t(img.w) * 3);
    const double step = win / double(img.h);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c)
                out.px[(size_t(y) * size_t(img.w) + size_t(x)) * 3 + size_t(c)] =
                    bilinear(img, ty + (y + 0.5) * step - 0.5, tx + (x + 0.5) * step - 0.5, c);
    return out;
}

}  // namespace

synth::Image apply_augmentations(const synth::Image& img, const AugmentConfig& cfg,
                                 uint64_t seed) {
    if (img.h <= 1 || img.w != img.h) throw ArgumentError("apply_augmentations: bad image");
    core::Rng rng(seed);
    synth::Image out = img;
    if (cfg.resize) {
        double zoom = rng.uniform(cfg.zoom_min, cfg.zoom_max);
        double win = double(img.h) / zoom;
        double t = (double(img.h) - win) / 2.0;
        out = resample_window(out, t, t, win);
    }
    if (cfg.crop) {
        double s = rng.uniform(cfg.crop_scale_min, 1.0);
        double win = s * double(img.h);
        double ty = rng.uniform() * (double(img.h) - win);
        double tx = rng.uniform() * (double(img.h) - win);
        out = resample_window(out, ty, tx, win);
    }
    if (cfg.color_jitter) {
        float g[3];
        for (int c = 0; c < 3; ++c)
            g[c] = float(rng.uniform(1.0 - cfg.jitter_strength, 1.0 + cfg.jitter_strength));
        for (size_t i = 0; i < out.px.size(); ++i)
            out.px[i] = std::clamp(out.px[i] * g[i % 3], 0.0f, 1.0f);
    }
    if (cfg.grayscale && rng.uniform() < cfg.grayscale_prob) {
        for (size_t i = 0; i < out.px.size(); i += 3) {
            float lum = 0.299f * out.px[i] + 0.587f * out.px[i + 1] + 0.114f * out.px[i + 2];
            out.px[i] = out.px[i + 1] = out.px[i + 2] = lum;
        }
    }
    return out;
}

}  // namespace clfa::train
