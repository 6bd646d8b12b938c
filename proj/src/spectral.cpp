#include "attrib/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attrib/error.hpp"

namespace attrib::spectral {

namespace {

std::vector<std::complex<double>> twiddles(std::size_t n) {
    std::vector<std::complex<double>> t(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double a = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
        t[k] = {std::cos(a), std::sin(a)};
    }
    return t;
}

double normalized_radius(std::size_t u, std::size_t v, std::size_t height, std::size_t width) {
    const double fy = static_cast<double>(u <= height / 2 ? u : height - u) / (static_cast<double>(height) / 2.0);
    const double fx = static_cast<double>(v <= width / 2 ? v : width - v) / (static_cast<double>(width) / 2.0);
    return std::sqrt(fx * fx + fy * fy);
}

std::vector<float> centered(std::span<const float> plane) {
    const double mean = std::accumulate(plane.begin(), plane.end(), 0.0) / static_cast<double>(plane.size());
    std::vector<float> out(plane.size());
    for (std::size_t i = 0; i < plane.size(); ++i) out[i] = static_cast<float>(plane[i] - mean);
    return out;
}

}  // namespace

std::vector<std::complex<double>> dft2d(std::span<const float> plane, std::size_t height, std::size_t width) {
    if (plane.size() != height * width) throw DimensionError("dft2d: plane size does not match geometry");
    const auto tw = twiddles(width);
    const auto th = twiddles(height);
    std::vector<std::complex<double>> rows(height * width);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t v = 0; v < width; ++v) {
            std::complex<double> acc = 0.0;
            for (std::size_t x = 0; x < width; ++x) acc += static_cast<double>(plane[y * width + x]) * tw[(v * x) % width];
            rows[y * width + v] = acc;
        }
    std::vector<std::complex<double>> out(height * width);
    for (std::size_t v = 0; v < width; ++v)
        for (std::size_t u = 0; u < height; ++u) {
            std::complex<double> acc = 0.0;
            for (std::size_t y = 0; y < height; ++y) acc += rows[y * width + v] * th[(u * y) % height];
            out[u * width + v] = acc;
        }
    return out;
}

std::vector<double> radial_band_rms(std::span<const float> plane, std::size_t height, std::size_t width,
                                    std::size_t bands) {
    const auto spec = dft2d(centered(plane), height, width);
    std::vector<double> power(bands, 0.0);
    std::vector<std::size_t> count(bands, 0);
    for (std::size_t u = 0; u < height; ++u)
        for (std::size_t v = 0; v < width; ++v) {
            if (u == 0 && v == 0) continue;
            const double r = normalized_radius(u, v, height, width);
            if (r > 1.0) continue;
            const std::size_t b = std::min(bands - 1, static_cast<std::size_t>(std::ceil(r * static_cast<double>(bands))) - 1);
            power[b] += std::norm(spec[u * width + v]);
            ++count[b];
        }
    const double hw = static_cast<double>(height * width);
    std::vector<double> out(bands, 0.0);
    for (std::size_t b = 0; b < bands; ++b)
        if (count[b] > 0) out[b] = std::sqrt(power[b] / static_cast<double>(count[b]) / hw);
    return out;
}

double high_frequency_energy(std::span<const float> plane, std::size_t height, std::size_t width, double cutoff) {
    const auto spec = dft2d(plane, height, width);
    double e = 0.0;
    for (std::size_t u = 0; u < height; ++u)
        for (std::size_t v = 0; v < width; ++v)
            if (normalized_radius(u, v, height, width) > cutoff) e += std::norm(spec[u * width + v]);
    return e / static_cast<double>(height * width);
}

std::vector<std::pair<std::size_t, std::size_t>> upsampling_harmonics(std::size_t height, std::size_t width,
                                                                      std::size_t factor) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (factor == 0 || height % factor != 0 || width % factor != 0) return out;
    for (std::size_t i = 0; i < factor; ++i)
        for (std::size_t j = 0; j < factor; ++j)
            if (i != 0 || j != 0) out.emplace_back(i * height / factor, j * width / factor);
    return out;
}

double peak_ratio(const std::vector<std::complex<double>>& spectrum, std::size_t height, std::size_t width,
                  std::size_t u, std::size_t v, std::size_t radius) {
    std::vector<double> neigh;
    const auto r = static_cast<std::ptrdiff_t>(radius);
    for (std::ptrdiff_t du = -r; du <= r; ++du)
        for (std::ptrdiff_t dv = -r; dv <= r; ++dv) {
            if (du == 0 && dv == 0) continue;
            const std::size_t uu = static_cast<std::size_t>((static_cast<std::ptrdiff_t>(u + height) + du)) % height;
            const std::size_t vv = static_cast<std::size_t>((static_cast<std::ptrdiff_t>(v + width) + dv)) % width;
            neigh.push_back(std::abs(spectrum[uu * width + vv]));
        }
    std::nth_element(neigh.begin(), neigh.begin() + static_cast<std::ptrdiff_t>(neigh.size() / 2), neigh.end());
    const double lo = *std::max_element(neigh.begin(), neigh.begin() + static_cast<std::ptrdiff_t>(neigh.size() / 2));
    const double hi = neigh[neigh.size() / 2];
    const double median = 0.5 * (lo + hi);
    const double centre = std::abs(spectrum[u * width + v]);
    return centre / std::max(median, 1e-12);
}

PeakReport harmonic_peaks(const Image& img, std::size_t factor) {
    const auto plane = centered(img.luminance());
    const auto spec = dft2d(plane, img.height, img.width);
    PeakReport rep;
    for (const auto& [u, v] : upsampling_harmonics(img.height, img.width, factor)) {
        const double ratio = peak_ratio(spec, img.height, img.width, u, v);
        rep.ratios.push_back(ratio);
        rep.max_ratio = std::max(rep.max_ratio, ratio);
        const double c = std::abs(spec[u * img.width + v]);
        bool is_max = true;
        for (int du = -1; du <= 1 && is_max; ++du)
            for (int dv = -1; dv <= 1; ++dv) {
                if (du == 0 && dv == 0) continue;
                const std::size_t uu = (u + img.height + static_cast<std::size_t>(du + 1) - 1) % img.height;
                const std::size_t vv = (v + img.width + static_cast<std::size_t>(dv + 1) - 1) % img.width;
                if (std::abs(spec[uu * img.width + vv]) >= c) {
                    is_max = false;
                    break;
                }
            }
        if (is_max) ++rep.local_maxima;
    }
    return rep;
}

bool has_upsampling_peaks(const Image& img, double threshold, std::size_t min_count) {
    const PeakReport rep = harmonic_peaks(img);
    std::size_t n = 0;
    for (double r : rep.ratios) n += r >= threshold ? 1 : 0;
    return n >= min_count;
}

}  // namespace attrib::spectral
