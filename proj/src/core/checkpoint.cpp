#include "clfa/core/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "clfa/core/errors.hpp"

namespace clfa::core {

static_assert(sizeof(float) == 4);

namespace {

constexpr char kMagic[8] = {'C', 'L', 'F', 'A', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::vector<uint8_t>& out, T v) {
    uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
}

template <class T>
T take(const uint8_t*& p, const uint8_t* end) {
    if (p + sizeof(T) > end) throw IoError("checkpoint: truncated file");
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    return v;
}

}  // namespace

void Checkpoint::add(const std::string& name, std::vector<int> dims, const float* p) {
    size_t n = 1;
    for (int d : dims) n *= size_t(d);
    Array a;
    a.name = name;
    a.dims = std::move(dims);
    a.data.assign(p, p + n);
    arrays.push_back(std::move(a));
}

const Checkpoint::Array& Checkpoint::get(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return a;
    throw IoError("checkpoint: missing array " + name);
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return true;
    return false;
}

std::vector<uint8_t> Checkpoint::to_bytes() const {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    put<uint32_t>(out, kVersion);
    const std::string hdr = header.dump();
    put<uint64_t>(out, hdr.size());
    out.insert(out.end(), hdr.begin(), hdr.end());
    put<uint32_t>(out, uint32_t(arrays.size()));
    for (const auto& a : arrays) {
        put<uint16_t>(out, uint16_t(a.name.size()));
        out.insert(out.end(), a.name.begin(), a.name.end());
        put<uint8_t>(out, 0);  // dtype f32
        put<uint8_t>(out, uint8_t(a.dims.size()));
        for (int d : a.dims) put<uint32_t>(out, uint32_t(d));
        const uint8_t* raw = reinterpret_cast<const uint8_t*>(a.data.data());
        out.insert(out.end(), raw, raw + a.data.size() * 4);
    }
    return out;
}

void Checkpoint::save(const std::string& path) const {
    const auto bytes = to_bytes();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw IoError("checkpoint: short write to " + path);
}

Checkpoint Checkpoint::from_bytes(const uint8_t* p, size_t n) {
    const uint8_t* end = p + n;
    if (n < 12 || std::memcmp(p, kMagic, 8) != 0)
        throw IoError("checkpoint: bad magic (not a checkpoint file)");
    p += 8;
    const uint32_t ver = take<uint32_t>(p, end);
    if (ver != kVersion)
        throw IoError("checkpoint: unsupported container version " + std::to_string(ver));
    const uint64_t hlen = take<uint64_t>(p, end);
    if (p + hlen > end) throw IoError("checkpoint: truncated header");
    Checkpoint c;
    c.header = nlohmann::json::parse(p, p + hlen);
    p += hlen;
    const uint32_t count = take<uint32_t>(p, end);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t nl = take<uint16_t>(p, end);
        if (p + nl > end) throw IoError("checkpoint: truncated array name");
        Array a;
        a.name.assign(reinterpret_cast<const char*>(p), nl);
        p += nl;
        const uint8_t dtype = take<uint8_t>(p, end);
        if (dtype != 0) throw IoError("checkpoint: unsupported dtype");
        const uint8_t ndim = take<uint8_t>(p, end);
        size_t total = 1;
        for (uint8_t d = 0; d < ndim; ++d) {
            a.dims.push_back(int(take<uint32_t>(p, end)));
            total *= size_t(a.dims.back());
        }
        if (p + total * 4 > end) throw IoError("checkpoint: truncated array payload");
        a.data.resize(total);
        std::memcpy(a.data.data(), p, total * 4);
        p += total * 4;
        c.arrays.push_back(std::move(a));
    }
    return c;
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_bytes(bytes.data(), bytes.size());
}

uint64_t fnv1a64(const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    uint64_t h = 1469598103934665603ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return fnv1a64(bytes.data(), bytes.size());
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace clfa::core
