#include "attrib/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "attrib/error.hpp"

namespace attrib {

std::vector<float> Image::luminance() const {
    const std::size_t n = plane_size();
    if (channels == 1) return {pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(n)};
    std::vector<float> out(n, 0.0f);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < n; ++i) out[i] += pixels[c * n + i];
    for (auto& v : out) v /= static_cast<float>(channels);
    return out;
}

namespace {

std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in, const std::filesystem::path& path) {
    std::string tok;
    while (true) {
        const int ch = in.get();
        if (ch == EOF) throw FormatError(path.string() + ": truncated PGM header");
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
}

}  // namespace

Image quantize8(const Image& img) {
    Image out = img;
    for (auto& v : out.pixels) v = static_cast<float>(to_byte(v)) / 255.0f;
    return out;
}

void write_pgm(const Image& img, const std::filesystem::path& path) {
    if (img.channels != 1) throw UsageError("write_pgm: only single-channel images can be stored as PGM");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<char> bytes(img.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(to_byte(img.pixels[i]));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    if (header_token(in, path) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(header_token(in, path));
        h = std::stoul(header_token(in, path));
        maxval = std::stoul(header_token(in, path));
    } catch (const std::logic_error&) {
        throw FormatError(path.string() + ": malformed PGM header");
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
        throw FormatError(path.string() + ": unsupported PGM geometry or maxval");
    std::vector<unsigned char> bytes(w * h);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
        throw FormatError(path.string() + ": truncated PGM data");
    Image img(1, h, w);
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img.pixels[i] = static_cast<float>(bytes[i]) / static_cast<float>(maxval);
    return img;
}

}  // namespace attrib
