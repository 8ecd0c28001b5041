#pragma once

// ".tns" container: "TNSR" | u32 version | u8 dtype (1 = f32) | u8 rank | u32 dims... | f32 payload.
// All integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <vector>

#include "m2tr/errors.hpp"
#include "m2tr/tensor.hpp"

namespace m2tr::tns {

inline constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("tns: truncated stream");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace detail

/// Writes dims as u32 followed by the f32 payload (shared by the checkpoint format).
template <typename T>
void write_dims_and_payload(std::ostream& os, const Tensor<T>& t) {
    for (std::size_t d : t.shape()) detail::put_u32(os, static_cast<std::uint32_t>(d));
    std::vector<char> buf(t.size() * 4);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(t[i]));
        buf[4 * i] = static_cast<char>(u & 0xff);
        buf[4 * i + 1] = static_cast<char>((u >> 8) & 0xff);
        buf[4 * i + 2] = static_cast<char>((u >> 16) & 0xff);
        buf[4 * i + 3] = static_cast<char>((u >> 24) & 0xff);
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

template <typename T = float>
Tensor<T> read_dims_and_payload(std::istream& is, std::size_t rank) {
    Shape shape(rank);
    for (auto& d : shape) {
        d = detail::get_u32(is);
        if (d == 0) throw DataError("tns: zero-sized dimension");
    }
    const std::size_t n = shape_size(shape);
    std::vector<unsigned char> buf(n * 4);
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
        throw DataError("tns: truncated payload");
    std::vector<T> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t u = buf[4 * i] | (buf[4 * i + 1] << 8) | (buf[4 * i + 2] << 16) |
                                (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
        data[i] = static_cast<T>(std::bit_cast<float>(u));
    }
    return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
void write(std::ostream& os, const Tensor<T>& t) {
    if (t.rank() > 255) throw ShapeError("tns: rank exceeds 255");
    os.write(kMagic, 4);
    detail::put_u32(os, kVersion);
    os.put(static_cast<char>(kDtypeF32));
    os.put(static_cast<char>(t.rank()));
    write_dims_and_payload(os, t);
}

template <typename T = float>
Tensor<T> read(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("tns: bad magic");
    const std::uint32_t version = detail::get_u32(is);
    if (version != kVersion)
        throw DataError("tns: unsupported version " + std::to_string(version));
    const int dtype = is.get();
    const int rank = is.get();
    if (dtype == std::char_traits<char>::eof() || rank == std::char_traits<char>::eof())
        throw DataError("tns: truncated header");
    if (dtype != kDtypeF32) throw DataError("tns: unsupported dtype code " + std::to_string(dtype));
    if (rank == 0) throw DataError("tns: rank must be positive");
    return read_dims_and_payload<T>(is, static_cast<std::size_t>(rank));
}

template <typename T>
void save(const std::filesystem::path& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write(os, t);
    if (!os) throw DataError("failed writing " + path.string());
}

template <typename T = float>
Tensor<T> load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    return read<T>(is);
}

}  // namespace m2tr::tns
