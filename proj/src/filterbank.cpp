#include "attrib/filterbank.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "attrib/error.hpp"
#include "attrib/rng.hpp"
#include "io_util.hpp"

namespace attrib {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kNumBaseFilters> kBaseNames = {
    "H_LEFT", "H_RIGHT", "V_UP", "V_DOWN", "D_UPLEFT", "D_UPRIGHT", "D_DOWNLEFT", "D_DOWNRIGHT",
};

Grid3 base_grid(BaseFilterId id) {
    Grid3 g{};
    g[1][1] = -1;
    const auto [r, c] = neighbor_position(id);
    g[r][c] = 1;
    return g;
}

// Full 2-D convolution of two kernels with odd supports.
std::vector<std::vector<int>> convolve_full(const std::vector<std::vector<int>>& a,
                                            const std::vector<std::vector<int>>& b) {
    const std::size_t n = a.size() + b.size() - 1;
    std::vector<std::vector<int>> out(n, std::vector<int>(n, 0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            for (std::size_t k = 0; k < b.size(); ++k)
                for (std::size_t l = 0; l < b.size(); ++l) out[i + k][j + l] += a[i][j] * b[k][l];
    return out;
}

std::vector<BaseFilterId> normalized_subset(std::span<const BaseFilterId> subset) {
    std::vector<BaseFilterId> s(subset.begin(), subset.end());
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

std::size_t line_of_byte(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::ostringstream msg;
        msg << source << ": line " << line_of_byte(text, e.byte) << ": " << e.what();
        throw ParseError(msg.str());
    }
}

const json& require(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
    return obj.at(key);
}

Kernel3 kernel_from_json(const json& j, const std::string& where) {
    Kernel3 k;
    const json& id = require(j, "id", where);
    if (!id.is_string()) throw ParseError(where + ".id: expected string");
    k.id = id.get<std::string>();

    const json& subset = require(j, "subset", where);
    if (!subset.is_array()) throw ParseError(where + ".subset: expected array");
    for (std::size_t i = 0; i < subset.size(); ++i) {
        if (!subset[i].is_string())
            throw ParseError(where + ".subset[" + std::to_string(i) + "]: expected string");
        try {
            k.subset.push_back(base_filter_from_string(subset[i].get<std::string>()));
        } catch (const Error&) {
            throw ParseError(where + ".subset[" + std::to_string(i) + "]: unknown base filter '" +
                             subset[i].get<std::string>() + "'");
        }
    }

    const json& coeffs = require(j, "coeffs", where);
    if (!coeffs.is_array() || coeffs.size() != 3) throw ParseError(where + ".coeffs: expected 3 rows");
    for (std::size_t r = 0; r < 3; ++r) {
        if (!coeffs[r].is_array() || coeffs[r].size() != 3)
            throw ParseError(where + ".coeffs[" + std::to_string(r) + "]: expected 3 integers");
        for (std::size_t c = 0; c < 3; ++c) {
            if (!coeffs[r][c].is_number_integer())
                throw ParseError(where + ".coeffs[" + std::to_string(r) + "][" + std::to_string(c) +
                                 "]: expected integer");
            k.coeffs[r][c] = coeffs[r][c].get<int>();
        }
    }
    return k;
}

json kernel_to_json(const Kernel3& k) {
    json subset = json::array();
    for (auto b : k.subset) subset.push_back(std::string(to_string(b)));
    json coeffs = json::array();
    for (const auto& row : k.coeffs) coeffs.push_back(json::array({row[0], row[1], row[2]}));
    return json{{"id", k.id}, {"subset", subset}, {"coeffs", coeffs}};
}

}  // namespace

std::string_view to_string(BaseFilterId id) { return kBaseNames[static_cast<std::size_t>(id)]; }

BaseFilterId base_filter_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kBaseNames.size(); ++i)
        if (kBaseNames[i] == name) return kBaseFilterIds[i];
    throw ValidationError("unknown base filter id '" + std::string(name) + "'");
}

std::pair<int, int> neighbor_position(BaseFilterId id) {
    switch (id) {
        case BaseFilterId::H_LEFT: return {1, 0};
        case BaseFilterId::H_RIGHT: return {1, 2};
        case BaseFilterId::V_UP: return {0, 1};
        case BaseFilterId::V_DOWN: return {2, 1};
        case BaseFilterId::D_UPLEFT: return {0, 0};
        case BaseFilterId::D_UPRIGHT: return {0, 2};
        case BaseFilterId::D_DOWNLEFT: return {2, 0};
        case BaseFilterId::D_DOWNRIGHT: return {2, 2};
    }
    return {1, 1};
}

int Kernel3::sum() const {
    int s = 0;
    for (const auto& row : coeffs)
        for (int v : row) s += v;
    return s;
}

void Kernel3::validate() const {
    if (subset.empty() || subset.size() >= kNumBaseFilters)
        throw ValidationError("filter '" + id + "': subset size " + std::to_string(subset.size()) +
                              " outside 1..7");
    if (!std::is_sorted(subset.begin(), subset.end()) ||
        std::adjacent_find(subset.begin(), subset.end()) != subset.end())
        throw ValidationError("filter '" + id + "': subset must be sorted and unique");
    if (sum() != 0)
        throw ValidationError("filter '" + id + "': coefficients sum to " + std::to_string(sum()) + ", expected 0");
    if (center() != -static_cast<int>(subset.size()))
        throw ValidationError("filter '" + id + "': center " + std::to_string(center()) + " does not equal -" +
                              std::to_string(subset.size()));
    Grid3 expected{};
    expected[1][1] = center();
    for (auto b : subset) {
        const auto [r, c] = neighbor_position(b);
        expected[r][c] = 1;
    }
    if (expected != coeffs) throw ValidationError("filter '" + id + "': off-center taps do not match its subset");
}

std::vector<Kernel3> base_filters() {
    std::vector<Kernel3> out;
    out.reserve(kNumBaseFilters);
    for (auto id : kBaseFilterIds) out.push_back(Kernel3{base_grid(id), std::string(to_string(id)), {id}});
    return out;
}

std::string composite_id(std::span<const BaseFilterId> subset) {
    std::string id;
    for (auto b : normalized_subset(subset)) {
        if (!id.empty()) id += '+';
        id += to_string(b);
    }
    return id;
}

Kernel3 compose(std::span<const BaseFilterId> subset, CompositionMode mode) {
    auto members = normalized_subset(subset);
    if (members.size() != subset.size()) throw UsageError("compose: subset contains duplicates");
    if (members.empty() || members.size() >= kNumBaseFilters)
        throw UsageError("compose: subset size must be 1..7, got " + std::to_string(members.size()));

    Kernel3 k;
    k.subset = members;
    k.id = composite_id(members);
    if (mode == CompositionMode::Sum) {
        for (auto b : members) {
            const Grid3 g = base_grid(b);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) k.coeffs[r][c] += g[r][c];
        }
        return k;
    }

    auto to_vec = [](const Grid3& g) {
        std::vector<std::vector<int>> v(3, std::vector<int>(3));
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) v[r][c] = g[r][c];
        return v;
    };
    auto acc = to_vec(base_grid(members.front()));
    for (std::size_t i = 1; i < members.size(); ++i) acc = convolve_full(acc, to_vec(base_grid(members[i])));
    const std::size_t mid = acc.size() / 2;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) k.coeffs[r][c] = acc[mid - 1 + r][mid - 1 + c];
    return k;
}

const Kernel3& FilterBank::by_id(std::string_view id) const {
    for (const auto& f : filters)
        if (f.id == id) return f;
    throw LookupError("no filter with id '" + std::string(id) + "'");
}

void FilterBank::validate() const {
    if (filters.size() != kNumMhfFilters)
        throw ValidationError("filter bank has " + std::to_string(filters.size()) + " filters, expected " +
                              std::to_string(kNumMhfFilters));
    std::set<Grid3> grids;
    std::set<std::string> ids;
    std::size_t bases = 0;
    for (const auto& f : filters) {
        f.validate();
        if (f.id != composite_id(f.subset))
            throw ValidationError("filter '" + f.id + "': id does not match subset");
        if (!grids.insert(f.coeffs).second) throw ValidationError("filter '" + f.id + "': duplicate coefficients");
        if (!ids.insert(f.id).second) throw ValidationError("duplicate filter id '" + f.id + "'");
        if (f.subset.size() == 1) ++bases;
    }
    if (bases != kNumBaseFilters)
        throw ValidationError("filter bank has " + std::to_string(bases) + " base filters, expected 8");
}

FilterBank build_mhf_set() {
    FilterBank bank;
    bank.filters = base_filters();

    std::vector<std::vector<BaseFilterId>> subsets;
    for (unsigned mask = 1; mask < (1u << kNumBaseFilters); ++mask) {
        const int n = std::popcount(mask);
        if (n < 2 || n > 7) continue;
        std::vector<BaseFilterId> s;
        for (std::size_t b = 0; b < kNumBaseFilters; ++b)
            if (mask & (1u << b)) s.push_back(kBaseFilterIds[b]);
        subsets.push_back(std::move(s));
    }
    std::sort(subsets.begin(), subsets.end());
    for (const auto& s : subsets) bank.filters.push_back(compose(s));
    return bank;
}

std::array<std::size_t, 7> center_tallies(const FilterBank& bank) {
    std::array<std::size_t, 7> t{};
    for (const auto& f : bank.filters) {
        const int c = -f.center();
        if (c >= 1 && c <= 7) ++t[static_cast<std::size_t>(c - 1)];
    }
    return t;
}

void Partition::validate(const FilterBank& bank) const {
    std::map<std::string, int> center_of;
    for (const auto& f : bank.filters) center_of[f.id] = f.center();

    std::map<std::string, int> seen;
    for (std::size_t p = 0; p < kNumParts; ++p) {
        if (parts[p].size() != kPartSize)
            throw ValidationError("partition part " + std::to_string(p + 1) + " has " +
                                  std::to_string(parts[p].size()) + " filters, expected 64");
        std::set<int> centers;
        for (const auto& id : parts[p]) {
            auto it = center_of.find(id);
            if (it == center_of.end()) throw ValidationError("partition references unknown filter '" + id + "'");
            centers.insert(it->second);
        }
        if (centers.size() != 7)
            throw ValidationError("partition part " + std::to_string(p + 1) + " does not cover all 7 center values");
    }
    // The duplicated pair is stored at the tail of the last part.
    const auto& last = parts[kNumParts - 1];
    for (std::size_t i = 0; i < 2; ++i) {
        if (last[kPartSize - 2 + i] != duplicated[i])
            throw ValidationError("partition duplicates must close the last part");
    }
    if (duplicated[0] == duplicated[1]) throw ValidationError("partition duplicates must be distinct");
    for (std::size_t p = 0; p < kNumParts; ++p) {
        const std::size_t distinct = p + 1 == kNumParts ? kPartSize - 2 : kPartSize;
        for (std::size_t i = 0; i < distinct; ++i) ++seen[parts[p][i]];
    }
    for (const auto& d : duplicated) {
        if (std::find(last.begin(), last.begin() + (kPartSize - 2), d) == last.begin() + (kPartSize - 2))
            throw ValidationError("duplicated filter '" + d + "' is not a member of the last part");
    }
    if (seen.size() != bank.filters.size())
        throw ValidationError("partition covers " + std::to_string(seen.size()) + " distinct filters, expected " +
                              std::to_string(bank.filters.size()));
    for (const auto& [id, n] : seen)
        if (n != 1) throw ValidationError("filter '" + id + "' appears in more than one slot");
}

Partition partition_filters(const FilterBank& bank, std::uint64_t seed) {
    if (bank.filters.size() != kNumMhfFilters)
        throw ValidationError("partition_filters requires a bank of 254 filters");

    Rng rng(hash_seed(seed, fnv1a("mhf-partition")));
    // Unassigned filter indices, bucketed by center value.
    std::array<std::vector<std::size_t>, 7> pool;
    for (std::size_t i = 0; i < bank.filters.size(); ++i)
        pool[static_cast<std::size_t>(-bank.filters[i].center() - 1)].push_back(i);

    auto take = [&](std::vector<std::size_t>& bucket) {
        const std::size_t j = rng.uniform_index(bucket.size());
        const std::size_t idx = bucket[j];
        bucket.erase(bucket.begin() + static_cast<std::ptrdiff_t>(j));
        return idx;
    };

    std::array<std::vector<std::size_t>, kNumParts> members;
    // Stratified phase for every part before any random fill, so no center
    // value can be exhausted ahead of the last part.
    for (std::size_t p = 0; p < kNumParts; ++p)
        for (auto& bucket : pool) members[p].push_back(take(bucket));

    std::vector<std::size_t> rest;
    for (const auto& bucket : pool) rest.insert(rest.end(), bucket.begin(), bucket.end());
    std::sort(rest.begin(), rest.end());
    for (std::size_t p = 0; p < kNumParts; ++p) {
        const std::size_t target = p + 1 == kNumParts ? kPartSize - 2 : kPartSize;
        while (members[p].size() < target) members[p].push_back(take(rest));
    }

    Partition out;
    out.seed = seed;
    for (std::size_t p = 0; p < kNumParts; ++p)
        for (auto idx : members[p]) out.parts[p].push_back(bank.filters[idx].id);

    auto& last = out.parts[kNumParts - 1];
    std::vector<std::size_t> slots(last.size());
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    const std::size_t a = take(slots);
    const std::size_t b = take(slots);
    out.duplicated = {last[a], last[b]};
    last.push_back(out.duplicated[0]);
    last.push_back(out.duplicated[1]);
    return out;
}

void save_bank(const FilterBank& bank, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "{\n  \"version\": " << bank.version << ",\n  \"filters\": [\n";
    for (std::size_t i = 0; i < bank.filters.size(); ++i) {
        out << "    " << kernel_to_json(bank.filters[i]).dump();
        out << (i + 1 < bank.filters.size() ? ",\n" : "\n");
    }
    out << "  ]\n}\n";
    io::write_text_file(path, out.str());
}

FilterBank load_bank(const std::filesystem::path& path) {
    const std::string text = io::read_text_file(path);
    const json doc = parse_json_text(text, path.string());
    FilterBank bank;
    const json& version = require(doc, "version", "bank");
    if (!version.is_number_integer()) throw ParseError("bank.version: expected integer");
    bank.version = version.get<int>();
    const json& filters = require(doc, "filters", "bank");
    if (!filters.is_array()) throw ParseError("bank.filters: expected array");
    for (std::size_t i = 0; i < filters.size(); ++i)
        bank.filters.push_back(kernel_from_json(filters[i], "bank.filters[" + std::to_string(i) + "]"));
    bank.validate();
    return bank;
}

std::string partition_to_json(const Partition& partition) {
    std::ostringstream out;
    out << "{\n  \"seed\": " << partition.seed << ",\n  \"parts\": [\n";
    for (std::size_t p = 0; p < kNumParts; ++p) {
        out << "    " << json(partition.parts[p]).dump() << (p + 1 < kNumParts ? ",\n" : "\n");
    }
    out << "  ],\n  \"duplicated\": " << json(partition.duplicated).dump() << "\n}\n";
    return out.str();
}

Partition partition_from_json(std::string_view text_view) {
    const std::string text(text_view);
    const json doc = parse_json_text(text, "partition");
    Partition p;
    const json& seed = require(doc, "seed", "partition");
    if (!seed.is_number_unsigned() && !seed.is_number_integer()) throw ParseError("partition.seed: expected integer");
    p.seed = seed.get<std::uint64_t>();
    const json& parts = require(doc, "parts", "partition");
    if (!parts.is_array() || parts.size() != kNumParts) throw ParseError("partition.parts: expected 4 lists");
    for (std::size_t i = 0; i < kNumParts; ++i) {
        if (!parts[i].is_array()) throw ParseError("partition.parts[" + std::to_string(i) + "]: expected array");
        for (std::size_t j = 0; j < parts[i].size(); ++j) {
            if (!parts[i][j].is_string())
                throw ParseError("partition.parts[" + std::to_string(i) + "][" + std::to_string(j) +
                                 "]: expected string");
            p.parts[i].push_back(parts[i][j].get<std::string>());
        }
    }
    const json& dup = require(doc, "duplicated", "partition");
    if (!dup.is_array() || dup.size() != 2 || !dup[0].is_string() || !dup[1].is_string())
        throw ParseError("partition.duplicated: expected 2 filter ids");
    p.duplicated = {dup[0].get<std::string>(), dup[1].get<std::string>()};
    return p;
}

void save_partition(const Partition& partition, const std::filesystem::path& path) {
    io::write_text_file(path, partition_to_json(partition));
}

Partition load_partition(const std::filesystem::path& path) {
    Partition p = partition_from_json(io::read_text_file(path));
    p.validate(build_mhf_set());
    return p;
}

}  // namespace attrib
