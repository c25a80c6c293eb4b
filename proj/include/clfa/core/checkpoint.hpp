#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace clfa::core {

// Single-file checkpoint container:
//   magic "CLFACKPT" | u32 container version | u64 header length | header JSON
//   | u32 array count | arrays (u16 name len, name, u8 dtype=0 (f32),
//   u8 ndim, u32 dims..., raw f32 payload)
// The header JSON carries format_version, kind, model_config, seed and any
// training state. nlohmann serializes objects with sorted keys and arrays are
// written in registration order, so identical state yields identical bytes.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    struct Array {
        std::string name;
        std::vector<int> dims;
        std::vector<float> data;
    };

    nlohmann::json header;
    std::vector<Array> arrays;

    void add(const std::string& name, std::vector<int> dims, const float* p);
    const Array& get(const std::string& name) const;
    bool has(const std::string& name) const;

    std::vector<uint8_t> to_bytes() const;
    void save(const std::string& path) const;
    static Checkpoint from_bytes(const uint8_t* p, size_t n);
    static Checkpoint load(const std::string& path);
};

uint64_t fnv1a64(const void* p, size_t n);
uint64_t fnv1a64_file(const std::string& path);
std::string hash_hex(uint64_t h);

}  // namespace clfa::core
