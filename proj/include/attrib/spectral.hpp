#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "attrib/image.hpp"

namespace attrib::spectral {

// Unnormalized 2-D DFT of a real H x W plane (row-major output).
std::vector<std::complex<double>> dft2d(std::span<const float> plane, std::size_t height, std::size_t width);

// RMS spectral magnitude in `bands` equal-width rings of normalized radius
// (0, 1], DC excluded and the mean removed first; corners beyond the
// Nyquist circle are ignored. Each value is sqrt(mean |F|^2 / (H*W)), so
// white noise of variance s^2 gives s in every band.
std::vector<double> radial_band_rms(std::span<const float> plane, std::size_t height, std::size_t width,
                                    std::size_t bands = 8);

// Total |F|^2 / (H*W) over frequencies whose normalized radius exceeds `cutoff`.
double high_frequency_energy(std::span<const float> plane, std::size_t height, std::size_t width,
                             double cutoff = 0.5);

// Non-DC multiples of (H/factor, W/factor): where zero-insertion upsampling
// by `factor` leaves periodic spectral replicas.
std::vector<std::pair<std::size_t, std::size_t>> upsampling_harmonics(std::size_t height, std::size_t width,
                                                                      std::size_t factor = 4);

// |F(u,v)| divided by the median magnitude of its (2r+1)^2 neighbourhood
// (centre excluded, wrapping at the borders).
double peak_ratio(const std::vector<std::complex<double>>& spectrum, std::size_t height, std::size_t width,
                  std::size_t u, std::size_t v, std::size_t radius = 2);

struct PeakReport {
    double max_ratio = 0.0;
    std::vector<double> ratios;  // aligned with upsampling_harmonics()
    std::size_t local_maxima = 0;  // harmonics that are strict 3x3 local maxima
};

PeakReport harmonic_peaks(const Image& img, std::size_t factor = 4);

// Spectral checkerboard detector: true when at least `min_count` upsampling
// harmonics stand `threshold` times or more above their local median.
bool has_upsampling_peaks(const Image& img, double threshold = 3.0, std::size_t min_count = 2);

}  // namespace attrib::spectral
