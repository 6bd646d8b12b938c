#pragma once

// Internal file helpers shared by the serializers.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

#include "attrib/error.hpp"

namespace attrib::io {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Little-endian scalar encoding, independent of host byte order.
template <typename U>
void put_le(std::ostream& out, U value) {
    static_assert(std::is_unsigned_v<U>);
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const std::string& what) {
    static_assert(std::is_unsigned_v<U>);
    unsigned char buf[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw FormatError("truncated input reading " + what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

inline void put_f32(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_le<std::uint32_t>(out, bits);
}

inline float get_f32(std::istream& in, const std::string& what) {
    const std::uint32_t bits = get_le<std::uint32_t>(in, what);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

inline void put_string(std::ostream& out, const std::string& s) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const std::string& what, std::uint32_t max_len = 1u << 20) {
    const auto n = get_le<std::uint32_t>(in, what + " length");
    if (n > max_len) throw FormatError(what + " length " + std::to_string(n) + " is implausible");
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), n)) throw FormatError("truncated input reading " + what);
    return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
    char buf[4];
    if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
        throw FormatError(what + ": bad magic, expected '" + std::string(magic) + "'");
}

}  // namespace attrib::io
