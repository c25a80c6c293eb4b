#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace clfa::core {

// Flat parameter/gradient storage with a name -> (offset, dims) registry.
// Registration happens up front (offsets only), then allocate() sizes the
// buffers; tensors are addressed by offset so the vectors never move under
// a live pointer.
template <class T>
struct ParamPack {
    struct Entry {
        std::string name;
        size_t offset = 0;
        std::vector<int> dims;
        size_t size = 0;
    };

    std::vector<Entry> entries;
    std::vector<T> data;
    std::vector<T> grad;
    size_t total = 0;
    bool allocated = false;

    size_t add(const std::string& name, std::vector<int> dims) {
        if (allocated) throw std::logic_error("ParamPack: add after allocate");
        size_t sz = 1;
        for (int d : dims) sz *= size_t(d);
        Entry e;
        e.name = name;
        e.offset = total;
        e.dims = std::move(dims);
        e.size = sz;
        entries.push_back(std::move(e));
        total += sz;
        return entries.back().offset;
    }

    void allocate() {
        data.assign(total, T(0));
        grad.assign(total, T(0));
        allocated = true;
    }

    T* ptr(size_t offset) { return data.data() + offset; }
    const T* ptr(size_t offset) const { return data.data() + offset; }
    T* gptr(size_t offset) { return grad.data() + offset; }
    const T* gptr(size_t offset) const { return grad.data() + offset; }

    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

    const Entry& find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw std::out_of_range("ParamPack: no tensor named " + name);
    }
};

}  // namespace clfa::core
