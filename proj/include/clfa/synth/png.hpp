#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clfa/synth/image.hpp"

namespace clfa::synth {

// Minimal 8-bit RGB PNG codec on top of zlib. Writer always emits filter 0
// scanlines at compression level 6, so identical pixels give identical bytes.
std::vector<uint8_t> encode_png_rgb8(int w, int h, const std::vector<uint8_t>& rgb);
void write_png_rgb8(const std::string& path, int w, int h, const std::vector<uint8_t>& rgb);
std::vector<uint8_t> decode_png_rgb8(const std::vector<uint8_t>& file, int& w, int& h);
std::vector<uint8_t> read_png_rgb8(const std::string& path, int& w, int& h);

// [0,1] float image <-> 8-bit, round-to-nearest
std::vector<uint8_t> quantize_rgb8(const Image& img);
Image dequantize_rgb8(int w, int h, const std::vector<uint8_t>& rgb);

void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace clfa::synth
