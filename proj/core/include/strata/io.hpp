#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <vector>

namespace strata {

// Little-endian scalar packing shared by the file formats and the wire
// protocol. The host is almost certainly little-endian, but spelling it out
// keeps the byte layouts authoritative.

inline void store_u32le(unsigned char* p, std::uint32_t v) {
    p[0] = static_cast<unsigned char>(v);
    p[1] = static_cast<unsigned char>(v >> 8);
    p[2] = static_cast<unsigned char>(v >> 16);
    p[3] = static_cast<unsigned char>(v >> 24);
}

inline void store_u64le(unsigned char* p, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

inline std::uint32_t load_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t load_u64le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline void store_f32le(unsigned char* p, float f) {
    store_u32le(p, std::bit_cast<std::uint32_t>(f));
}

inline float load_f32le(const unsigned char* p) {
    return std::bit_cast<float>(load_u32le(p));
}

// Growable byte buffer helpers for the wire encoders.
inline void append_u32le(std::vector<unsigned char>& buf, std::uint32_t v) {
    unsigned char tmp[4];
    store_u32le(tmp, v);
    buf.insert(buf.end(), tmp, tmp + 4);
}

inline void append_u64le(std::vector<unsigned char>& buf, std::uint64_t v) {
    unsigned char tmp[8];
    store_u64le(tmp, v);
    buf.insert(buf.end(), tmp, tmp + 8);
}

inline void append_f32le(std::vector<unsigned char>& buf, float f) {
    append_u32le(buf, std::bit_cast<std::uint32_t>(f));
}

} // namespace strata
