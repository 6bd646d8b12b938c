#pragma once

// Frozen semantic descriptors fused with the directional features. The
// built-in descriptor is a coarse layout/tone/spectrum summary; external
// embeddings (for example vectors from a pretrained image encoder computed
// elsewhere) can be injected through an embeddings file.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "attrib/image.hpp"

namespace attrib {

inline constexpr std::size_t kBlockGrid = 8;
inline constexpr std::size_t kHistogramBins = 32;
inline constexpr std::size_t kSpectralBands = 8;
inline constexpr std::size_t kBuiltinSemanticDim = kBlockGrid * kBlockGrid + kHistogramBins + kSpectralBands;  // 104

// Embeddings file, little-endian:
//   "ATEM" | u32 version | u32 S | u32 count
//   per record: u32 id length | UTF-8 id | f32[S]
struct EmbeddingTable {
    std::size_t dim = 0;
    std::map<std::string, std::vector<float>, std::less<>> vectors;

    bool operator==(const EmbeddingTable&) const = default;
};

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

enum class SemanticKind { BuiltinStats, ExternalEmbeddings };

std::string_view to_string(SemanticKind kind);
SemanticKind semantic_kind_from_string(std::string_view s);

class SemanticExtractor {
public:
    static SemanticExtractor builtin();
    static SemanticExtractor external(EmbeddingTable table);

    SemanticKind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }

    // `id` is only consulted by the external kind; a missing id raises LookupError.
    std::vector<float> extract(const Image& img, std::string_view id = {}) const;

private:
    SemanticExtractor(SemanticKind kind, std::size_t dim) : kind_(kind), dim_(dim) {}

    SemanticKind kind_;
    std::size_t dim_;
    EmbeddingTable table_;
};

// 8x8 block means, 32-bin intensity histogram (fractions), 8 radial
// spectral bands. Requires height and width divisible by 8.
std::vector<float> builtin_stats(const Image& img);

}  // namespace attrib
