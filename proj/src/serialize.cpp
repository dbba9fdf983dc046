#include "focus/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "archive format assumes a little-endian host");

namespace focus {

namespace {

constexpr char kMagic[8] = {'F', 'O', 'C', 'U', 'S', 'A', 'R', '1'};

template <class T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::ifstream& f, const std::string& path) {
    T v;
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw std::runtime_error("truncated archive: " + path);
    return v;
}

}  // namespace

void save_archive(const std::string& path, const Archive& a) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(kMagic, sizeof(kMagic));
    put<uint64_t>(f, a.tensors.size());
    for (const auto& [name, t] : a.tensors) {
        if (!t.defined()) throw std::runtime_error("undefined tensor in archive: " + name);
        put<uint32_t>(f, static_cast<uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<uint8_t>(f, static_cast<uint8_t>(t.dtype()));
        put<uint32_t>(f, static_cast<uint32_t>(t.rank()));
        for (long d : t.shape()) put<int64_t>(f, d);
        f.write(reinterpret_cast<const char*>(t.values().data()),
                static_cast<std::streamsize>(t.values().size() * sizeof(double)));
    }
    put<uint64_t>(f, a.meta.size());
    f.write(a.meta.data(), static_cast<std::streamsize>(a.meta.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Archive load_archive(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a focus archive: " + path);
    Archive a;
    uint64_t n = take<uint64_t>(f, path);
    for (uint64_t i = 0; i < n; ++i) {
        uint32_t len = take<uint32_t>(f, path);
        std::string name(len, '\0');
        f.read(name.data(), len);
        if (!f) throw std::runtime_error("truncated archive: " + path);
        uint8_t dt = take<uint8_t>(f, path);
        if (dt > 1) throw std::runtime_error("bad dtype in archive: " + path);
        uint32_t rank = take<uint32_t>(f, path);
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = take<int64_t>(f, path);
        long numel = shape_numel(shape);
        if (numel < 0) throw std::runtime_error("bad shape in archive: " + path);
        Tensor t = make_tensor(shape, static_cast<DType>(dt));
        f.read(reinterpret_cast<char*>(t.raw().data()),
               static_cast<std::streamsize>(static_cast<size_t>(numel) * sizeof(double)));
        if (!f) throw std::runtime_error("truncated archive: " + path);
        a.tensors.emplace(std::move(name), std::move(t));
    }
    uint64_t mlen = take<uint64_t>(f, path);
    a.meta.resize(mlen);
    f.read(a.meta.data(), static_cast<std::streamsize>(mlen));
    if (!f) throw std::runtime_error("truncated archive: " + path);
    return a;
}

}  // namespace focus
