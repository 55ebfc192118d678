#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "holobench/core/error.hpp"
#include "holobench/optics.hpp"

namespace holo {

// Binary 8-bit PGM (P5), scaled so the maximum maps to 255.
inline void write_pgm(const std::filesystem::path& path, std::span<const double> values, int width, int height) {
    if (values.size() != static_cast<std::size_t>(width) * height)
        throw InvalidArgument("pgm: value count does not match dimensions");
    const double vmax = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string());
    os << "P5\n" << width << ' ' << height << "\n255\n";
    std::vector<unsigned char> bytes(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double v = vmax > 0.0 ? std::clamp(values[k] / vmax, 0.0, 1.0) : 0.0;
        bytes[k] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

inline void write_pgm(const std::filesystem::path& path, const IntensityImage& img) {
    write_pgm(path, img.val, img.size, img.size);
}

inline void write_pgm(const std::filesystem::path& path, const Hologram& h) {
    write_pgm(path, h.phase, h.size, h.size);
}

struct PgmImage {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> pixels;
};

inline PgmImage read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::string magic;
    int maxval = 0;
    PgmImage img;
    is >> magic >> img.width >> img.height >> maxval;
    if (magic != "P5" || maxval != 255 || img.width <= 0 || img.height <= 0)
        throw IoError("unsupported pgm: " + path.string());
    is.get();
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size())))
        throw IoError("truncated pgm: " + path.string());
    return img;
}

} // namespace holo
