#pragma once

#include <cstddef>
#include <vector>

namespace clfa::synth {

// H x W x 3 interleaved RGB, values in [0,1].
struct Image {
    int h = 0, w = 0;
    std::vector<float> px;

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), px(size_t(h_) * w_ * 3, 0.0f) {}

    float& at(int y, int x, int c) { return px[(size_t(y) * w + x) * 3 + c]; }
    float at(int y, int x, int c) const { return px[(size_t(y) * w + x) * 3 + c]; }
    size_t size() const { return px.size(); }

    bool operator==(const Image& o) const { return h == o.h && w == o.w && px == o.px; }
};

}  // namespace clfa::synth
