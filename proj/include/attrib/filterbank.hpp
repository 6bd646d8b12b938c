#pragma once

// Multi-directional high-pass filters: 8 base kernels, the 246 composites
// formed from every 2..7-subset of them, and the 4-way split used to seed
// the directional convolution blocks.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attrib {

enum class BaseFilterId : std::uint8_t {
    H_LEFT,
    H_RIGHT,
    V_UP,
    V_DOWN,
    D_UPLEFT,
    D_UPRIGHT,
    D_DOWNLEFT,
    D_DOWNRIGHT,
};

inline constexpr std::size_t kNumBaseFilters = 8;
inline constexpr std::size_t kNumMhfFilters = 254;
inline constexpr std::size_t kNumParts = 4;
inline constexpr std::size_t kPartSize = 64;

inline constexpr std::array<BaseFilterId, kNumBaseFilters> kBaseFilterIds = {
    BaseFilterId::H_LEFT,   BaseFilterId::H_RIGHT,   BaseFilterId::V_UP,       BaseFilterId::V_DOWN,
    BaseFilterId::D_UPLEFT, BaseFilterId::D_UPRIGHT, BaseFilterId::D_DOWNLEFT, BaseFilterId::D_DOWNRIGHT,
};

std::string_view to_string(BaseFilterId id);
BaseFilterId base_filter_from_string(std::string_view name);

// Grid position (row, col) of the +1 tap. Rows run y-1..y+1 top to bottom,
// columns x-1..x+1 left to right.
std::pair<int, int> neighbor_position(BaseFilterId id);

using Grid3 = std::array<std::array<int, 3>, 3>;

struct Kernel3 {
    Grid3 coeffs{};
    std::string id;
    std::vector<BaseFilterId> subset;  // sorted, unique

    int center() const { return coeffs[1][1]; }
    int sum() const;

    // Checks zero sum, center == -|subset| and the off-center taps.
    void validate() const;

    bool operator==(const Kernel3&) const = default;
};

enum class CompositionMode {
    Sum,      // coefficient-wise sum of the member base kernels
    ConvCrop  // full 2-D convolution of the members, center-cropped to 3x3 (experimental)
};

std::vector<Kernel3> base_filters();

// Throws UsageError for an empty subset or one containing all 8 base filters.
Kernel3 compose(std::span<const BaseFilterId> subset, CompositionMode mode = CompositionMode::Sum);

std::string composite_id(std::span<const BaseFilterId> subset);

struct FilterBank {
    std::vector<Kernel3> filters;
    int version = 1;

    const Kernel3& by_id(std::string_view id) const;
    void validate() const;

    bool operator==(const FilterBank&) const = default;
};

FilterBank build_mhf_set();

// Counts of filters per center value -1..-7 (index 0 is center -1).
std::array<std::size_t, 7> center_tallies(const FilterBank& bank);

struct Partition {
    std::array<std::vector<std::string>, kNumParts> parts;
    std::array<std::string, 2> duplicated;
    std::uint64_t seed = 0;

    void validate(const FilterBank& bank) const;

    bool operator==(const Partition&) const = default;
};

Partition partition_filters(const FilterBank& bank, std::uint64_t seed);

void save_bank(const FilterBank& bank, const std::filesystem::path& path);
FilterBank load_bank(const std::filesystem::path& path);

void save_partition(const Partition& partition, const std::filesystem::path& path);
Partition load_partition(const std::filesystem::path& path);

// In-memory JSON text forms, shared by the file functions and checkpoint sidecars.
std::string partition_to_json(const Partition& partition);
Partition partition_from_json(std::string_view text);

}  // namespace attrib
