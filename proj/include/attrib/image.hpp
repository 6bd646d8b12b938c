#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace attrib {

// Planar [C,H,W] image with samples in [0, 1].
struct Image {
    std::size_t channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
        : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

    float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
    float& at(std::size_t y, std::size_t x) { return at(0, y, x); }
    float at(std::size_t y, std::size_t x) const { return at(0, y, x); }

    std::size_t plane_size() const { return height * width; }

    // Channel mean as a single plane.
    std::vector<float> luminance() const;

    bool operator==(const Image&) const = default;
};

// Rounds to the nearest of 256 levels, as stored in an 8-bit file.
Image quantize8(const Image& img);

// Binary greyscale PGM (P5, maxval 255). Single-channel only.
void write_pgm(const Image& img, const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);

}  // namespace attrib
