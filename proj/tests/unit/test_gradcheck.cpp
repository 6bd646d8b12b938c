#include <doctest.h>

#include <algorithm>

#include "gradcheck_suite.hpp"

namespace {

constexpr std::uint64_t kSeeds = 20;
constexpr double kTolerance = 1e-4;

}  // namespace

TEST_CASE("gradient checks for every op and the composed graph") {
    for (const auto& c : testing::gradcheck_cases()) {
        CAPTURE(c.name);
        double worst = 0;
        std::size_t checked = 0;
        for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
            const auto r = c.run(seed);
            worst = std::max(worst, r.max_rel_error);
            checked += r.checked;
        }
        CHECK(checked > 0);
        CHECK(worst < kTolerance);
    }
}
