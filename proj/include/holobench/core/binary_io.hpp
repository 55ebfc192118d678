#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "holobench/core/error.hpp"

namespace holo::io {

// Little-endian scalar/array helpers for the on-disk formats.

template <typename T>
    requires std::is_arithmetic_v<T>
void write_le(std::ostream& os, T value) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
    requires std::is_arithmetic_v<T>
T read_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> bytes{};
    if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
        throw IoError("unexpected end of file");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    return std::bit_cast<T>(bytes);
}

template <typename T>
    requires std::is_arithmetic_v<T>
void write_le_array(std::ostream& os, std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (T v : values) write_le(os, v);
    }
}

template <typename T>
    requires std::is_arithmetic_v<T>
void read_le_array(std::istream& is, std::span<T> out) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!is.read(reinterpret_cast<char*>(out.data()),
                     static_cast<std::streamsize>(out.size_bytes()))) {
            throw IoError("unexpected end of file");
        }
    } else {
        for (T& v : out) v = read_le<T>(is);
    }
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, std::uint32_t max_len = 1u << 26) {
    const auto n = read_le<std::uint32_t>(is);
    if (n > max_len) throw IoError("string length out of range");
    std::string s(n, '\0');
    if (n > 0 && !is.read(s.data(), n)) throw IoError("unexpected end of file");
    return s;
}

inline void write_magic(std::ostream& os, std::string_view magic) {
    os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
    std::string got(magic.size(), '\0');
    if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
        throw IoError("bad magic, expected \"" + std::string(magic) + "\"");
    }
}

} // namespace holo::io
