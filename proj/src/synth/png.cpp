#include "clfa/synth/png.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "clfa/core/errors.hpp"

namespace clfa::synth {

namespace {

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint32_t get_u32be(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    put_u32be(out, uint32_t(payload.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = crc32(0, out.data() + start, uInt(out.size() - start));
    put_u32be(out, crc);
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

std::vector<uint8_t> encode_png_rgb8(int w, int h, const std::vector<uint8_t>& rgb) {
    if (rgb.size() != size_t(w) * h * 3) throw ArgumentError("png: pixel buffer size mismatch");
    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

    std::vector<uint8_t> ihdr;
    put_u32be(ihdr, uint32_t(w));
    put_u32be(ihdr, uint32_t(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter method
    ihdr.push_back(0);   // no interlace
    put_chunk(out, "IHDR", ihdr);

    std::vector<uint8_t> raw;
    raw.reserve(size_t(h) * (size_t(w) * 3 + 1));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);  // filter: none
        const uint8_t* row = rgb.data() + size_t(y) * w * 3;
        raw.insert(raw.end(), row, row + size_t(w) * 3);
    }
    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<uint8_t> comp(bound);
    if (compress2(comp.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw IoError("png: deflate failed");
    comp.resize(bound);
    put_chunk(out, "IDAT", comp);
    put_chunk(out, "IEND", {});
    return out;
}

void write_png_rgb8(const std::string& path, int w, int h, const std::vector<uint8_t>& rgb) {
    auto bytes = encode_png_rgb8(w, h, rgb);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("png: cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw IoError("png: short write to " + path);
}

std::vector<uint8_t> decode_png_rgb8(const std::vector<uint8_t>& file, int& w, int& h) {
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
        throw IoError("png: bad signature");
    size_t pos = 8;
    w = h = 0;
    std::vector<uint8_t> idat;
    bool done = false;
    while (pos + 8 <= file.size() && !done) {
        uint32_t len = get_u32be(file.data() + pos);
        if (pos + 12 + len > file.size()) throw IoError("png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
        const uint8_t* payload = file.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("png: bad IHDR");
            w = int(get_u32be(payload));
            h = int(get_u32be(payload + 4));
            if (payload[8] != 8 || payload[9] != 2 || payload[12] != 0)
                throw IoError("png: only 8-bit non-interlaced RGB supported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            done = true;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0 || idat.empty()) throw IoError("png: missing IHDR/IDAT");

    const size_t stride = size_t(w) * 3;
    std::vector<uint8_t> raw(size_t(h) * (stride + 1));
    uLongf rawlen = uLongf(raw.size());
    if (uncompress(raw.data(), &rawlen, idat.data(), uLong(idat.size())) != Z_OK ||
        rawlen != raw.size())
        throw IoError("png: inflate failed");

    std::vector<uint8_t> rgb(size_t(h) * stride);
    std::vector<uint8_t> prev(stride, 0);
    for (int y = 0; y < h; ++y) {
        const uint8_t filter = raw[size_t(y) * (stride + 1)];
        const uint8_t* src = raw.data() + size_t(y) * (stride + 1) + 1;
        uint8_t* dst = rgb.data() + size_t(y) * stride;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= 3 ? dst[i - 3] : 0;
            const int b = prev[i];
            const int c = i >= 3 ? prev[i - 3] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw IoError("png: unknown filter type");
            }
            dst[i] = uint8_t(v);
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return rgb;
}

std::vector<uint8_t> read_png_rgb8(const std::string& path, int& w, int& h) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("png: cannot open " + path);
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_png_rgb8(file, w, h);
}

std::vector<uint8_t> quantize_rgb8(const Image& img) {
    std::vector<uint8_t> out(img.px.size());
    for (size_t i = 0; i < img.px.size(); ++i) {
        float v = img.px[i];
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        out[i] = uint8_t(std::lround(v * 255.0f));
    }
    return out;
}

Image dequantize_rgb8(int w, int h, const std::vector<uint8_t>& rgb) {
    Image img(h, w);
    for (size_t i = 0; i < rgb.size(); ++i) img.px[i] = float(rgb[i]) / 255.0f;
    return img;
}

void write_png(const std::string& path, const Image& img) {
    write_png_rgb8(path, img.w, img.h, quantize_rgb8(img));
}

Image read_png(const std::string& path) {
    int w = 0, h = 0;
    auto rgb = read_png_rgb8(path, w, h);
    return dequantize_rgb8(w, h, rgb);
}

}  // namespace clfa::synth
