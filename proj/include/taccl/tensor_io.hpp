#pragma once

// On-disk tensor format:
//   "TACT" | u16 version (=1) | u8 dtype | u8 ndim | ndim x u32 dims | payload
// All integers and payload values are little-endian; payload is row-major.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "core.hpp"

namespace taccl {

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

inline std::size_t dtype_size(DType t) {
    switch (t) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
    }
    return 0;
}

/// A typed n-dimensional array. Values are held as doubles; f32 and u8 tensors
/// only hold values exactly representable in their dtype after a load.
struct TensorFile {
    DType dtype = DType::F64;
    std::vector<std::uint32_t> dims;
    std::vector<double> values;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
    friend bool operator==(const TensorFile&, const TensorFile&) = default;
};

inline constexpr std::array<char, 4> kTensorMagic{'T', 'A', 'C', 'T'};
inline constexpr std::uint16_t kTensorVersion = 1;

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <class T>
T get_le(const unsigned char* p) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace detail

inline std::vector<unsigned char> encode_tensor(const TensorFile& t) {
    if (t.dims.size() > 255) throw Error(ErrorKind::FormatError, "too many dimensions");
    if (t.values.size() != t.element_count()) {
        throw Error(ErrorKind::ShapeMismatch, "tensor values do not match dims");
    }
    std::vector<unsigned char> out(kTensorMagic.begin(), kTensorMagic.end());
    detail::put_le<std::uint16_t>(out, kTensorVersion);
    out.push_back(static_cast<unsigned char>(t.dtype));
    out.push_back(static_cast<unsigned char>(t.dims.size()));
    for (auto d : t.dims) detail::put_le<std::uint32_t>(out, d);
    out.reserve(out.size() + t.values.size() * dtype_size(t.dtype));
    for (double v : t.values) {
        switch (t.dtype) {
        case DType::F32: detail::put_le<float>(out, static_cast<float>(v)); break;
        case DType::F64: detail::put_le<double>(out, v); break;
        case DType::U8: out.push_back(static_cast<unsigned char>(v)); break;
        }
    }
    return out;
}

inline TensorFile decode_tensor(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 8) throw Error(ErrorKind::FormatError, "truncated header");
    if (std::memcmp(bytes.data(), kTensorMagic.data(), 4) != 0) {
        std::string got(reinterpret_cast<const char*>(bytes.data()), 4);
        throw Error(ErrorKind::FormatError, "bad magic '" + got + "', expected 'TACT'");
    }
    const auto version = detail::get_le<std::uint16_t>(bytes.data() + 4);
    if (version != kTensorVersion) {
        throw Error(ErrorKind::FormatError, "unsupported version " + std::to_string(version));
    }
    const auto dtype_byte = bytes[6];
    if (dtype_byte > 2) throw Error(ErrorKind::FormatError, "unknown dtype " + std::to_string(dtype_byte));
    TensorFile t;
    t.dtype = static_cast<DType>(dtype_byte);
    const std::size_t ndim = bytes[7];
    std::size_t pos = 8;
    if (bytes.size() < pos + 4 * ndim) throw Error(ErrorKind::FormatError, "truncated dims");
    for (std::size_t i = 0; i < ndim; ++i, pos += 4) t.dims.push_back(detail::get_le<std::uint32_t>(bytes.data() + pos));
    const std::size_t n = t.element_count();
    const std::size_t esize = dtype_size(t.dtype);
    if (bytes.size() != pos + n * esize) {
        throw Error(ErrorKind::FormatError, "payload size " + std::to_string(bytes.size() - pos) +
                                                " does not match dims (expected " + std::to_string(n * esize) + ")");
    }
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i, pos += esize) {
        switch (t.dtype) {
        case DType::F32: t.values[i] = detail::get_le<float>(bytes.data() + pos); break;
        case DType::F64: t.values[i] = detail::get_le<double>(bytes.data() + pos); break;
        case DType::U8: t.values[i] = bytes[pos]; break;
        }
    }
    return t;
}

inline void save_tensor(const std::filesystem::path& path, const TensorFile& t) {
    const auto bytes = encode_tensor(t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(ErrorKind::IoError, "write failed for '" + path.string() + "'");
}

inline TensorFile load_tensor(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return decode_tensor(bytes);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + std::string(e.what()));
    }
}

inline TensorFile to_tensor(const Grid2D& g, DType dtype = DType::F64) {
    return {dtype, {static_cast<std::uint32_t>(g.height()), static_cast<std::uint32_t>(g.width())}, g.values()};
}

inline TensorFile to_tensor(const Matrix& m, DType dtype = DType::F64) {
    return {dtype, {static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)}, m.data};
}

inline Matrix to_matrix(const TensorFile& t) {
    if (t.dims.size() != 2) throw Error(ErrorKind::ShapeMismatch, "expected a 2-D tensor");
    Matrix m(t.dims[0], t.dims[1]);
    m.data = t.values;
    return m;
}

}  // namespace taccl
