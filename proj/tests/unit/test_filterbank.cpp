#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "attrib/error.hpp"
#include "attrib/filterbank.hpp"
#include "support.hpp"

using namespace attrib;

namespace {

Grid3 grid(std::initializer_list<std::initializer_list<int>> rows) {
    Grid3 g{};
    std::size_t r = 0;
    for (const auto& row : rows) {
        std::size_t c = 0;
        for (int v : row) g[r][c++] = v;
        ++r;
    }
    return g;
}

std::size_t binomial(std::size_t n, std::size_t k) {
    std::size_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace

TEST_CASE("base filters in fixed order") {
    const auto base = base_filters();
    REQUIRE(base.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(base[i].subset == std::vector<BaseFilterId>{kBaseFilterIds[i]});
        CHECK(base[i].center() == -1);
        CHECK(base[i].sum() == 0);
        const auto [r, c] = neighbor_position(kBaseFilterIds[i]);
        CHECK(base[i].coeffs[r][c] == 1);
    }
    CHECK(base[0].coeffs == grid({{0, 0, 0}, {1, -1, 0}, {0, 0, 0}}));
    CHECK(base[2].coeffs == grid({{0, 1, 0}, {0, -1, 0}, {0, 0, 0}}));
    CHECK(base[7].coeffs == grid({{0, 0, 0}, {0, -1, 0}, {0, 0, 1}}));
}

TEST_CASE("neighbor positions are distinct off-center cells") {
    std::set<std::pair<int, int>> cells;
    for (auto id : kBaseFilterIds) cells.insert(neighbor_position(id));
    CHECK(cells.size() == 8);
    CHECK(cells.count({1, 1}) == 0);
}

TEST_CASE("compose sums member kernels") {
    const BaseFilterId single[] = {BaseFilterId::H_LEFT};
    CHECK(compose(single).coeffs == base_filters()[0].coeffs);

    const BaseFilterId pair[] = {BaseFilterId::H_LEFT, BaseFilterId::H_RIGHT};
    CHECK(compose(pair).coeffs == grid({{0, 0, 0}, {1, -2, 1}, {0, 0, 0}}));

    const BaseFilterId triple[] = {BaseFilterId::H_LEFT, BaseFilterId::D_UPLEFT, BaseFilterId::D_UPRIGHT};
    const Kernel3 k = compose(triple);
    CHECK(k.coeffs == grid({{1, 0, 1}, {1, -3, 0}, {0, 0, 0}}));
    CHECK(k.id == "H_LEFT+D_UPLEFT+D_UPRIGHT");
}

TEST_CASE("compose rejects empty and full subsets") {
    CHECK_THROWS_AS(compose(std::span<const BaseFilterId>{}), UsageError);
    CHECK_THROWS_AS(compose(kBaseFilterIds), UsageError);
}

TEST_CASE("every 1..7 subset composes to a zero-sum kernel with center -|S|") {
    for (unsigned mask = 1; mask < 255; ++mask) {
        std::vector<BaseFilterId> s;
        for (std::size_t b = 0; b < 8; ++b)
            if (mask & (1u << b)) s.push_back(kBaseFilterIds[b]);
        const Kernel3 k = compose(s);
        CHECK(k.sum() == 0);
        CHECK(k.center() == -static_cast<int>(s.size()));
        CHECK_NOTHROW(k.validate());
    }
}

TEST_CASE("convolution composition mode is the cropped full convolution") {
    const BaseFilterId members[] = {BaseFilterId::H_LEFT, BaseFilterId::V_UP, BaseFilterId::D_DOWNRIGHT};
    std::vector<std::vector<int>> acc(3, std::vector<int>(3, 0));
    acc[1][1] = 1;
    for (auto id : members) {
        const Grid3 g = compose(std::span<const BaseFilterId>(&id, 1)).coeffs;
        std::vector<std::vector<int>> next(acc.size() + 2, std::vector<int>(acc.size() + 2, 0));
        for (std::size_t i = 0; i < acc.size(); ++i)
            for (std::size_t j = 0; j < acc.size(); ++j)
                for (std::size_t k = 0; k < 3; ++k)
                    for (std::size_t l = 0; l < 3; ++l) next[i + k][j + l] += acc[i][j] * g[k][l];
        acc = next;
    }
    const std::size_t off = (acc.size() - 3) / 2;
    const Kernel3 k = compose(members, CompositionMode::ConvCrop);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(k.coeffs[r][c] == acc[off + r][off + c]);
}

TEST_CASE("filter bank counts") {
    const FilterBank bank = build_mhf_set();
    REQUIRE(bank.filters.size() == 254);
    std::size_t composites = 0;
    for (const auto& f : bank.filters) composites += f.subset.size() > 1;
    CHECK(composites == 246);

    std::size_t expected = 0;
    for (std::size_t k = 2; k <= 7; ++k) expected += binomial(8, k);
    CHECK(composites == expected);

    std::array<std::size_t, 7> oracle{};
    for (unsigned mask = 1; mask < 255; ++mask) ++oracle[std::popcount(mask) - 1];
    CHECK(center_tallies(bank) == oracle);
    CHECK(center_tallies(bank) == std::array<std::size_t, 7>{8, 28, 56, 70, 56, 28, 8});

    std::set<Grid3> grids;
    for (const auto& f : bank.filters) grids.insert(f.coeffs);
    CHECK(grids.size() == 254);
    CHECK_NOTHROW(bank.validate());
}

TEST_CASE("filter bank order is canonical and stable") {
    const FilterBank a = build_mhf_set(), b = build_mhf_set();
    CHECK(a == b);
    for (std::size_t i = 0; i < 8; ++i) CHECK(a.filters[i].subset.size() == 1);
    for (std::size_t i = 9; i < a.filters.size(); ++i) {
        const auto& prev = a.filters[i - 1].subset;
        const auto& cur = a.filters[i].subset;
        CHECK(std::lexicographical_compare(prev.begin(), prev.end(), cur.begin(), cur.end()));
    }
}

TEST_CASE("partition satisfies its constraints") {
    const FilterBank bank = build_mhf_set();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Partition p = partition_filters(bank, seed);
        CHECK_NOTHROW(p.validate(bank));
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(p.parts[k].size() == 64);
            std::set<int> centers;
            for (const auto& id : p.parts[k]) centers.insert(bank.by_id(id).center());
            CHECK(centers.size() == 7);
        }
        std::set<std::string> distinct;
        for (const auto& part : p.parts) distinct.insert(part.begin(), part.end());
        CHECK(distinct.size() == 254);
        CHECK(p.duplicated[0] != p.duplicated[1]);
        CHECK(p.parts[3][62] == p.duplicated[0]);
        CHECK(p.parts[3][63] == p.duplicated[1]);
        CHECK(std::count(p.parts[3].begin(), p.parts[3].end(), p.duplicated[0]) == 2);
    }
}

TEST_CASE("partition is a pure function of the seed") {
    const FilterBank bank = build_mhf_set();
    CHECK(partition_filters(bank, 7) == partition_filters(bank, 7));
    CHECK_FALSE(partition_filters(bank, 7) == partition_filters(bank, 8));
}

TEST_CASE("bank and partition files round-trip") {
    testing::TempDir dir("fb");
    const FilterBank bank = build_mhf_set();
    save_bank(bank, dir / "bank.json");
    CHECK(load_bank(dir / "bank.json") == bank);
    const Partition p = partition_filters(bank, 3);
    save_partition(p, dir / "part.json");
    CHECK(load_partition(dir / "part.json") == p);
    CHECK(partition_from_json(partition_to_json(p)) == p);
}

TEST_CASE("bank loading rejects invariant violations") {
    testing::TempDir dir("fbbad");
    FilterBank bank = build_mhf_set();

    FilterBank short_bank = bank;
    short_bank.filters.pop_back();
    save_bank(short_bank, dir / "short.json");
    CHECK_THROWS_AS(load_bank(dir / "short.json"), ValidationError);

    FilterBank odd = bank;
    odd.filters[10].coeffs[0][0] += 1;
    save_bank(odd, dir / "odd.json");
    CHECK_THROWS_AS(load_bank(dir / "odd.json"), ValidationError);

    std::ofstream(dir / "broken.json") << "{\n  \"version\": 1,\n  \"filters\": [ {\"id\": 3 ]\n}\n";
    try {
        load_bank(dir / "broken.json");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }

    CHECK_THROWS_AS(load_bank(dir / "missing.json"), IoError);
}

TEST_CASE("partition loading validates membership") {
    const FilterBank bank = build_mhf_set();
    Partition p = partition_filters(bank, 1);
    std::swap(p.parts[0][0], p.parts[3][0]);
    p.parts[0][0] = p.parts[0][1];
    CHECK_THROWS_AS(p.validate(bank), ValidationError);
}
