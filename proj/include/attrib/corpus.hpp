#pragma once

// Deterministic synthetic corpus of generator families and the robustness
// perturbations applied at evaluation time.
//
// Every image is 0.5 base texture shared across models at the same index,
// blended with a model signature:
//   real  fine multi-octave value noise plus sensor-like Gaussian noise
//   gan   a low-resolution field upsampled twice by zero insertion and a
//         model-specific separable kernel (periodic spectral replicas)
//   dm    white noise through rounds of anisotropic blur then unsharp
//         sharpening (model-specific residual correlation, no replicas)

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attrib/family.hpp"
#include "attrib/image.hpp"

namespace attrib {

struct ModelSpec {
    std::string id;
    Family family = Family::Real;
    bool seen = true;
    double amplitude = 0.2;  // signature standard deviation around 0.5
    // real
    double noise_sigma = 0.02;
    // gan: per-axis interpolation taps for each of the two x2 stages
    std::vector<double> kernel_x;
    std::vector<double> kernel_y;
    // dm
    double sigma_x = 1.0;
    double sigma_y = 1.0;
    int rounds = 1;
    double sharpen = 0.5;

    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

struct CorpusSpec {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t channels = 1;
    std::size_t train = 250;
    std::size_t reference = 50;
    std::size_t test = 500;
    std::uint64_t seed = 2024;
    double blend = 0.4;  // signature weight; the base texture gets 1 - blend
    std::vector<ModelSpec> models;

    static CorpusSpec default_spec();
    const ModelSpec& model(const std::string& id) const;
    void validate() const;
    bool operator==(const CorpusSpec&) const = default;
};

std::string corpus_spec_to_json(const CorpusSpec& spec);
CorpusSpec corpus_spec_from_json(std::string_view text);
CorpusSpec load_corpus_spec(const std::filesystem::path& path);

// Pure function of (spec seed, model id, index); samples in [0, 1].
Image generate_image(const CorpusSpec& spec, const ModelSpec& model, std::size_t index);

enum class Split { Train, Reference, Test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct ManifestEntry {
    std::string path;  // relative to the corpus directory
    std::string model;
    Family family = Family::Real;
    Split split = Split::Train;

    bool operator==(const ManifestEntry&) const = default;
};

// Reference indices of a seen model: the first `reference` train indices
// after a seeded shuffle, returned in ascending order.
std::vector<std::size_t> reference_indices(const CorpusSpec& spec, const std::string& model_id);

// Writes images/<model>/<index>.pgm, manifest.jsonl and spec.json.
std::vector<ManifestEntry> build_corpus(const CorpusSpec& spec, const std::filesystem::path& dir);

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
std::string manifest_to_jsonl(const std::vector<ManifestEntry>& entries);

// JPEG-style luminance coding without entropy stages: 8x8 DCT, quantization
// by the scaled standard luminance table, dequantization, inverse DCT and
// rounding to 8 bits. quality must lie in [1, 100].
Image perturb_jpeg(const Image& img, int quality);

// factor x factor area average; with restore the result is bilinearly
// resized back to the input size.
Image perturb_downsample(const Image& img, std::size_t factor = 4, bool restore = true);

}  // namespace attrib
