#ifndef SRM_SERIALIZE_HPP
#define SRM_SERIALIZE_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "srm/tensor.hpp"

namespace srm {

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Volume file: magic "SRMV", version u32, ndim u32, extents u32*ndim,
// dtype u32 (0 = f64, 1 = f32, 2 = i32), then raw row-major payload.
// All integers little-endian.
// ---------------------------------------------------------------------------

enum class VolumeDtype : std::uint32_t { F64 = 0, F32 = 1, I32 = 2 };

struct VolumeData {
    VolumeDtype dtype = VolumeDtype::F64;
    Shape extents;
    std::vector<double> f64;        // F64/F32 payloads (f32 values are exact in double)
    std::vector<std::int32_t> i32;  // I32 payloads

    std::size_t count() const { return numel(extents); }
};

namespace iodetail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("unexpected end of stream");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& is) {
    const std::uint64_t lo = get_u32(is);
    const std::uint64_t hi = get_u32(is);
    return lo | (hi << 32);
}

inline void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}

inline double get_f64(std::istream& is) {
    const std::uint64_t bits = get_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

inline float get_f32(std::istream& is) {
    const std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace iodetail

inline constexpr std::uint32_t kVolumeVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_volume(std::ostream& os, const VolumeData& v) {
    require(v.dtype == VolumeDtype::I32 ? v.i32.size() == v.count() : v.f64.size() == v.count(),
            "write_volume: payload length does not match extents");
    os.write("SRMV", 4);
    iodetail::put_u32(os, kVolumeVersion);
    iodetail::put_u32(os, static_cast<std::uint32_t>(v.extents.size()));
    for (std::size_t e : v.extents) iodetail::put_u32(os, static_cast<std::uint32_t>(e));
    iodetail::put_u32(os, static_cast<std::uint32_t>(v.dtype));
    switch (v.dtype) {
        case VolumeDtype::F64:
            for (double x : v.f64) iodetail::put_f64(os, x);
            break;
        case VolumeDtype::F32:
            for (double x : v.f64) iodetail::put_f32(os, static_cast<float>(x));
            break;
        case VolumeDtype::I32:
            for (std::int32_t x : v.i32) iodetail::put_u32(os, static_cast<std::uint32_t>(x));
            break;
    }
    if (!os) throw IoError("write_volume: stream failure");
}

inline VolumeData read_volume(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SRMV", 4) != 0) throw IoError("read_volume: bad magic");
    const std::uint32_t version = iodetail::get_u32(is);
    if (version != kVolumeVersion) throw IoError("read_volume: unsupported version " + std::to_string(version));
    const std::uint32_t ndim = iodetail::get_u32(is);
    if (ndim == 0 || ndim > 8) throw IoError("read_volume: implausible ndim " + std::to_string(ndim));
    VolumeData v;
    v.extents.resize(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) {
        v.extents[i] = iodetail::get_u32(is);
        if (v.extents[i] == 0) throw IoError("read_volume: zero extent");
    }
    const std::uint32_t dtype = iodetail::get_u32(is);
    if (dtype > 2) throw IoError("read_volume: unknown dtype code " + std::to_string(dtype));
    v.dtype = static_cast<VolumeDtype>(dtype);
    const std::size_t n = v.count();
    switch (v.dtype) {
        case VolumeDtype::F64:
            v.f64.resize(n);
            for (std::size_t i = 0; i < n; ++i) v.f64[i] = iodetail::get_f64(is);
            break;
        case VolumeDtype::F32:
            v.f64.resize(n);
            for (std::size_t i = 0; i < n; ++i) v.f64[i] = static_cast<double>(iodetail::get_f32(is));
            break;
        case VolumeDtype::I32:
            v.i32.resize(n);
            for (std::size_t i = 0; i < n; ++i) v.i32[i] = static_cast<std::int32_t>(iodetail::get_u32(is));
            break;
    }
    if (!is) throw IoError("read_volume: payload shorter than extents require");
    return v;
}

inline void write_volume_file(const std::string& path, const VolumeData& v) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_volume(os, v);
}

inline VolumeData read_volume_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    VolumeData v = read_volume(is);
    // A standalone volume file must contain exactly one volume.
    is.peek();
    if (!is.eof()) throw IoError("read_volume: trailing bytes after payload in " + path);
    return v;
}

inline VolumeData volume_from_tensor(const Tensor& t) {
    VolumeData v;
    v.dtype = VolumeDtype::F64;
    v.extents = t.shape();
    v.f64 = t.values();
    return v;
}

// ---------------------------------------------------------------------------
// Checkpoint file: magic "SRMC", version u32, config digest u64, param count
// u32, then per parameter (name_len u32, name bytes, embedded volume block).
// ---------------------------------------------------------------------------

inline void write_checkpoint(std::ostream& os, std::uint64_t config_digest,
                             const std::vector<std::pair<std::string, Tensor>>& params) {
    os.write("SRMC", 4);
    iodetail::put_u32(os, kCheckpointVersion);
    iodetail::put_u64(os, config_digest);
    iodetail::put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        iodetail::put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_volume(os, volume_from_tensor(tensor));
    }
    if (!os) throw IoError("write_checkpoint: stream failure");
}

inline std::vector<std::pair<std::string, VolumeData>> read_checkpoint(std::istream& is,
                                                                       std::uint64_t expected_digest) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SRMC", 4) != 0) throw IoError("read_checkpoint: bad magic");
    const std::uint32_t version = iodetail::get_u32(is);
    if (version != kCheckpointVersion) {
        throw IoError("read_checkpoint: unsupported version " + std::to_string(version));
    }
    const std::uint64_t digest = iodetail::get_u64(is);
    if (digest != expected_digest) {
        throw IoError("read_checkpoint: config digest mismatch (checkpoint was written for a different model config)");
    }
    const std::uint32_t count = iodetail::get_u32(is);
    std::vector<std::pair<std::string, VolumeData>> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = iodetail::get_u32(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw IoError("read_checkpoint: truncated name");
        out.emplace_back(std::move(name), read_volume(is));
    }
    return out;
}

inline void save_checkpoint_file(const std::string& path, std::uint64_t config_digest,
                                 const std::vector<std::pair<std::string, Tensor>>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_checkpoint(os, config_digest, params);
}

inline std::vector<std::pair<std::string, VolumeData>> load_checkpoint_file(const std::string& path,
                                                                            std::uint64_t expected_digest) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_checkpoint(is, expected_digest);
}

// Loads checkpoint payloads into matching named parameters.
inline void apply_checkpoint(std::vector<std::pair<std::string, Tensor>>& params,
                             const std::vector<std::pair<std::string, VolumeData>>& loaded) {
    if (params.size() != loaded.size()) throw IoError("apply_checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [name, tensor] = params[i];
        const auto& [lname, vol] = loaded[i];
        if (name != lname) throw IoError("apply_checkpoint: parameter name mismatch at index " + std::to_string(i));
        if (vol.dtype != VolumeDtype::F64 || vol.extents != tensor.shape()) {
            throw IoError("apply_checkpoint: shape/dtype mismatch for " + name);
        }
        tensor.values() = vol.f64;
    }
}

}  // namespace srm

#endif  // SRM_SERIALIZE_HPP
