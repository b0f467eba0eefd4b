#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

namespace fiplab::bytes {

// Explicit byte-order IO, independent of host endianness.

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    char b[4] = {
        static_cast<char>(v & 0xff),
        static_cast<char>((v >> 8) & 0xff),
        static_cast<char>((v >> 16) & 0xff),
        static_cast<char>((v >> 24) & 0xff),
    };
    out.write(b, 4);
}

inline bool read_u32_le(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        return false;
    }
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
    char b[4] = {
        static_cast<char>((v >> 24) & 0xff),
        static_cast<char>((v >> 16) & 0xff),
        static_cast<char>((v >> 8) & 0xff),
        static_cast<char>(v & 0xff),
    };
    out.write(b, 4);
}

inline bool read_u32_be(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        return false;
    }
    v = (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
        (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
    return true;
}

inline void write_f64_le(std::ostream& out, double value) {
    const auto bits = std::bit_cast<std::uint64_t>(value);
    char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    }
    out.write(b, 8);
}

inline bool read_f64_le(std::istream& in, double& value) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        return false;
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    }
    value = std::bit_cast<double>(bits);
    return true;
}

}  // namespace fiplab::bytes
