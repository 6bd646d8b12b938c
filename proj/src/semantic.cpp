#include "attrib/semantic.hpp"

#include <algorithm>
#include <fstream>

#include "attrib/error.hpp"
#include "attrib/spectral.hpp"
#include "io_util.hpp"

namespace attrib {

namespace {
constexpr std::uint32_t kEmbeddingsVersion = 1;
}

std::string_view to_string(SemanticKind kind) {
    return kind == SemanticKind::BuiltinStats ? "builtin" : "external";
}

SemanticKind semantic_kind_from_string(std::string_view s) {
    if (s == "builtin") return SemanticKind::BuiltinStats;
    if (s == "external") return SemanticKind::ExternalEmbeddings;
    throw ConfigError("unknown semantic extractor '" + std::string(s) + "' (expected builtin or external)");
}

std::vector<float> builtin_stats(const Image& img) {
    if (img.height % kBlockGrid != 0 || img.width % kBlockGrid != 0 || img.height == 0 || img.width == 0)
        throw DimensionError("builtin semantic features need height and width divisible by 8");
    const auto plane = img.luminance();
    std::vector<float> out;
    out.reserve(kBuiltinSemanticDim);

    const std::size_t bh = img.height / kBlockGrid, bw = img.width / kBlockGrid;
    for (std::size_t by = 0; by < kBlockGrid; ++by)
        for (std::size_t bx = 0; bx < kBlockGrid; ++bx) {
            double s = 0.0;
            for (std::size_t y = by * bh; y < (by + 1) * bh; ++y)
                for (std::size_t x = bx * bw; x < (bx + 1) * bw; ++x) s += plane[y * img.width + x];
            out.push_back(static_cast<float>(s / static_cast<double>(bh * bw)));
        }

    std::vector<std::size_t> hist(kHistogramBins, 0);
    for (float v : plane) {
        const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
        ++hist[std::min(kHistogramBins - 1, static_cast<std::size_t>(c * kHistogramBins))];
    }
    for (auto h : hist) out.push_back(static_cast<float>(static_cast<double>(h) / static_cast<double>(plane.size())));

    for (double b : spectral::radial_band_rms(plane, img.height, img.width, kSpectralBands))
        out.push_back(static_cast<float>(b));
    return out;
}

SemanticExtractor SemanticExtractor::builtin() { return SemanticExtractor(SemanticKind::BuiltinStats, kBuiltinSemanticDim); }

SemanticExtractor SemanticExtractor::external(EmbeddingTable table) {
    if (table.dim == 0) throw FormatError("embedding table has dimension 0");
    SemanticExtractor e(SemanticKind::ExternalEmbeddings, table.dim);
    e.table_ = std::move(table);
    return e;
}

std::vector<float> SemanticExtractor::extract(const Image& img, std::string_view id) const {
    if (kind_ == SemanticKind::BuiltinStats) return builtin_stats(img);
    auto it = table_.vectors.find(id);
    if (it == table_.vectors.end()) throw LookupError("no embedding for image id '" + std::string(id) + "'");
    return it->second;
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write embeddings " + path.string());
    out.write("ATEM", 4);
    io::put_le<std::uint32_t>(out, kEmbeddingsVersion);
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim));
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.vectors.size()));
    for (const auto& [id, vec] : table.vectors) {
        if (vec.size() != table.dim)
            throw FormatError("embedding '" + id + "' has dimension " + std::to_string(vec.size()) + ", table has " +
                              std::to_string(table.dim));
        io::put_string(out, id);
        for (float v : vec) io::put_f32(out, v);
    }
    if (!out) throw IoError("write failed for embeddings " + path.string());
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embeddings " + path.string());
    if (in.peek() == std::char_traits<char>::eof()) throw FormatError("embeddings file " + path.string() + " is empty");
    io::expect_magic(in, "ATEM", "embeddings " + path.string());
    const auto version = io::get_le<std::uint32_t>(in, "embeddings version");
    if (version != kEmbeddingsVersion) throw FormatError("embeddings version " + std::to_string(version) + " is not supported");
    EmbeddingTable t;
    t.dim = io::get_le<std::uint32_t>(in, "embedding dimension");
    if (t.dim == 0) throw FormatError("embedding dimension is 0");
    const auto count = io::get_le<std::uint32_t>(in, "embedding count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string id = io::get_string(in, "embedding id");
        std::vector<float> v(t.dim);
        for (auto& x : v) x = io::get_f32(in, "embedding values");
        if (!t.vectors.emplace(std::move(id), std::move(v)).second) throw FormatError("duplicate embedding id");
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw FormatError("embeddings file has trailing bytes (record dimension inconsistent with header)");
    return t;
}

}  // namespace attrib
