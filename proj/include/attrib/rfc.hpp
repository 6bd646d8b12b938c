#pragma once

// Reference-based fingerprint classification: average distance to each
// class's reference fingerprints, threshold rejection of unseen sources, and
// GAN/DM assignment of rejected samples by comparing family centers.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "attrib/family.hpp"

namespace attrib {

inline constexpr double kDefaultTheta = 3.5;

struct ReferenceClass {
    std::string id;
    Family family = Family::Real;
    std::vector<std::vector<float>> fingerprints;
};

struct ReferenceSet {
    std::size_t dim = 0;
    std::vector<ReferenceClass> classes;  // sorted by id
    std::vector<double> gan_center;       // empty when no GAN class is present
    std::vector<double> dm_center;        // empty when no DM class is present
};

// By default both a GAN and a DM class must be present so that both centers
// exist. With allow_single_family, a set holding only one of the two
// generated families is accepted and every rejected sample is assigned to it.
ReferenceSet build_reference_set(std::vector<ReferenceClass> classes, bool allow_single_family = false);

enum class Decision { Seen, UnseenGan, UnseenDm };

std::string_view to_string(Decision d);

struct AttributionResult {
    Decision decision = Decision::Seen;
    std::size_t class_index = 0;  // argmin over classes, valid for every decision
    std::string class_id;         // id of the argmin class
    std::vector<double> distances;
    double d_min = 0.0;
    double theta = kDefaultTheta;

    bool seen() const { return decision == Decision::Seen; }
    // Seen class id, or "unseen-gan" / "unseen-dm".
    std::string label() const;
};

AttributionResult classify(std::span<const float> f, const ReferenceSet& refs, double theta = kDefaultTheta);

// fingerprints is row-major [T, dim].
std::vector<AttributionResult> classify_batch(std::span<const float> fingerprints, const ReferenceSet& refs,
                                              double theta = kDefaultTheta);

std::string attribution_to_json(const AttributionResult& r, const ReferenceSet& refs);

// Fingerprint file, little-endian:
//   "ATFP" | u32 version | u32 D | u32 count
//   per record: u32 id length | id | u32 class length | class id | u8 family | f32[D]
struct FingerprintRecord {
    std::string id;
    std::string class_id;
    Family family = Family::Real;
    std::vector<float> values;

    bool operator==(const FingerprintRecord&) const = default;
};

struct FingerprintFile {
    std::size_t dim = 0;
    std::vector<FingerprintRecord> records;

    bool operator==(const FingerprintFile&) const = default;
};

void save_fingerprints(const FingerprintFile& file, const std::filesystem::path& path);
FingerprintFile load_fingerprints(const std::filesystem::path& path);

// A reference manifest lists one record id per line.
void save_reference_manifest(const std::vector<std::string>& ids, const std::filesystem::path& path);
std::vector<std::string> load_reference_manifest(const std::filesystem::path& path);

// Groups the listed records by class id.
ReferenceSet reference_set_from_records(const FingerprintFile& file, const std::vector<std::string>& ids,
                                        bool allow_single_family = false);

}  // namespace attrib
