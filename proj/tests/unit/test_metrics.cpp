#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "attrib/error.hpp"
#include "attrib/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace attrib;

namespace {

EvalRecord rec(std::string truth, bool seen, double score, std::string argmin, Decision d = Decision::Seen,
               Family fam = Family::Gan) {
    EvalRecord r;
    r.true_class = std::move(truth);
    r.true_family = fam;
    r.seen = seen;
    r.prediction.decision = d;
    r.prediction.class_id = std::move(argmin);
    r.prediction.d_min = score;
    return r;
}


std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    for (char c : s) out.emplace_back(1, c);
    return out;
}

}  // namespace

TEST_CASE("accuracy") {
    std::vector<EvalRecord> rs{rec("a", true, 1, "a"), rec("a", true, 1, "a"), rec("b", true, 1, "b"),
                               rec("b", true, 1, "a")};
    CHECK(accuracy(rs) == doctest::Approx(0.75).epsilon(1e-12));
    rs.pop_back();
    CHECK(accuracy(rs) == 1.0);

    // A record whose argmin is right but which is rejected counts as wrong.
    std::vector<EvalRecord> ten;
    const bool correct[] = {true, false, true, true, false, true, true, true, false, true};
    for (int i = 0; i < 10; ++i) {
        const std::string id = "m" + std::to_string(i % 3);
        ten.push_back(rec(id, true, 1, correct[i] ? id : "other"));
    }
    ten[0].prediction.decision = Decision::UnseenDm;
    CHECK(std::abs(accuracy(ten) - 0.6) < 1e-9);

    CHECK_THROWS_AS(accuracy({}), UsageError);
    CHECK_THROWS_AS(accuracy({rec("a", false, 1, "a")}), UsageError);
}

TEST_CASE("auc fixtures") {
    const std::vector<EvalRecord> four{rec("s", true, 1, "s"), rec("s", true, 2, "s"), rec("u", false, 3, "s"),
                                       rec("u", false, 1.5, "s")};
    CHECK(std::abs(auc(four) - 0.75) < 1e-9);
    CHECK(auc({rec("s", true, 1, "s"), rec("u", false, 2, "s")}) == 1.0);
    CHECK(auc({rec("s", true, 1, "s"), rec("s", true, 1, "s"), rec("u", false, 1, "s")}) == 0.5);
    CHECK_THROWS_AS(auc({rec("s", true, 1, "s")}), UsageError);
    CHECK_THROWS_AS(auc({rec("u", false, 1, "s")}), UsageError);
}

TEST_CASE("oscr fixtures") {
    const std::vector<EvalRecord> perfect{rec("a", true, 0, "a"), rec("b", true, 0, "b"), rec("u", false, 1, "a")};
    CHECK(oscr(perfect) == 1.0);
    const std::vector<EvalRecord> none{rec("a", true, 0, "b"), rec("u", false, 1, "a")};
    CHECK(oscr(none) == 0.0);
    // Thresholds 1,2,3,4 give (FPR, CCR) = (0,.5) (.5,.5) (.5,1) (1,1); area .25 + .5.
    const std::vector<EvalRecord> stair{rec("a", true, 1, "a"), rec("u", false, 2, "a"), rec("b", true, 3, "b"),
                                        rec("u", false, 4, "a")};
    CHECK(std::abs(oscr(stair) - 0.75) < 1e-9);
    // A misattributed seen record never raises CCR.
    const std::vector<EvalRecord> wrong{rec("a", true, 1, "a"), rec("u", false, 2, "a"), rec("b", true, 3, "a"),
                                        rec("u", false, 4, "a")};
    CHECK(std::abs(oscr(wrong) - 0.5) < 1e-9);
}

TEST_CASE("auc and oscr match brute force and ignore monotone score transforms") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        std::vector<EvalRecord> rs;
        const std::size_t n = 2 + rng.uniform_index(9);
        for (std::size_t i = 0; i < n; ++i) {
            const bool seen = i == 0 ? true : i == 1 ? false : rng.uniform() < 0.5;
            // Coarse scores force ties.
            const double s = std::round(rng.uniform() * 6) / 2;
            rs.push_back(rec("c" + std::to_string(i % 2), seen, s, rng.uniform() < 0.7 ? "c" + std::to_string(i % 2) : "x"));
        }
        CHECK(std::abs(auc(rs) - oracles::brute_auc(rs)) < 1e-9);
        CHECK(std::abs(oscr(rs) - oracles::brute_oscr(rs)) < 1e-9);
        auto warped = rs;
        for (auto& r : warped) r.prediction.d_min = std::exp(2 * r.prediction.d_min) + 3;
        CHECK(std::abs(auc(warped) - auc(rs)) < 1e-12);
        CHECK(std::abs(oscr(warped) - oscr(rs)) < 1e-12);
    }
}

TEST_CASE("nmi and ari fixtures") {
    // Frozen from an independent reference implementation (sklearn, geometric normalization).
    struct Fixture {
        const char* pred;
        const char* truth;
        double nmi;
        double ari;
    };
    const Fixture fixtures[] = {{"aabbcc", "xxxyyz", 0.5211105196400003, 0.07407407407407407},
                                {"aaaabbbccd", "xxxyyyzzzz", 0.5700964618148683, 0.28},
                                {"ababababab", "aabbaabbab", 0.029049405545331995, -0.08}};
    for (const auto& f : fixtures) {
        const auto p = split(f.pred), t = split(f.truth);
        CHECK(std::abs(nmi(p, t) - f.nmi) < 1e-9);
        CHECK(std::abs(ari(p, t) - f.ari) < 1e-9);
    }
    // 6-label hand evaluation: pairs same in pred 3, same in truth 4, both 1, of 15.
    // expected = 12/15 = 0.8, max = 3.5, ARI = 0.2 / 2.7.
    CHECK(std::abs(ari(split("aabbcc"), split("xxxyyz")) - 0.2 / 2.7) < 1e-12);

    const auto same = split("aabbbc");
    CHECK(nmi(same, same) == doctest::Approx(1.0));
    CHECK(ari(same, same) == doctest::Approx(1.0));
    CHECK(nmi(split("aaaaaa"), same) == 0.0);
    CHECK(nmi(split("aaaa"), split("bbbb")) == 1.0);
    CHECK(ari(split("aaaa"), split("bbbb")) == 1.0);
    CHECK_THROWS_AS(nmi({}, {}), UsageError);
    CHECK_THROWS_AS(ari(split("ab"), split("a")), DimensionError);
}

TEST_CASE("nmi and ari match brute force, are symmetric and ignore renaming") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const std::size_t n = 2 + rng.uniform_index(9);
        std::vector<std::string> p, t, renamed;
        for (std::size_t i = 0; i < n; ++i) {
            p.push_back(std::string(1, static_cast<char>('a' + rng.uniform_index(3))));
            t.push_back(std::string(1, static_cast<char>('x' + rng.uniform_index(3))));
            renamed.push_back("k" + p.back());
        }
        CHECK(std::abs(nmi(p, t) - oracles::brute_nmi(p, t)) < 1e-9);
        CHECK(std::abs(ari(p, t) - oracles::brute_ari(p, t)) < 1e-9);
        CHECK(std::abs(nmi(p, t) - nmi(t, p)) < 1e-12);
        CHECK(std::abs(ari(p, t) - ari(t, p)) < 1e-12);
        CHECK(std::abs(nmi(renamed, t) - nmi(p, t)) < 1e-12);
        CHECK(std::abs(ari(renamed, t) - ari(p, t)) < 1e-12);
    }
}

TEST_CASE("acc_u") {
    const std::vector<EvalRecord> all_right{rec("g4", false, 9, "g0", Decision::UnseenGan, Family::Gan),
                                            rec("d4", false, 9, "d0", Decision::UnseenDm, Family::Dm)};
    CHECK(acc_u(all_right) == 1.0);
    const std::vector<EvalRecord> absorbed{rec("g4", false, 1, "g0", Decision::Seen, Family::Gan),
                                           rec("d4", false, 1, "d0", Decision::Seen, Family::Dm)};
    CHECK(acc_u(absorbed) == 0.0);
    const std::vector<EvalRecord> mixed{rec("g4", false, 9, "g0", Decision::UnseenGan, Family::Gan),
                                        rec("g4", false, 9, "g0", Decision::UnseenDm, Family::Gan),
                                        rec("d4", false, 1, "d0", Decision::Seen, Family::Dm),
                                        rec("d4", false, 9, "d0", Decision::UnseenDm, Family::Dm),
                                        rec("d5", false, 9, "d0", Decision::UnseenGan, Family::Dm)};
    CHECK(std::abs(acc_u(mixed) - 0.4) < 1e-9);
    CHECK_THROWS_AS(acc_u({}), UsageError);
}

TEST_CASE("label lists") {
    const std::vector<EvalRecord> rs{rec("g0", true, 1, "g0"), rec("g4", false, 9, "g0", Decision::UnseenGan),
                                     rec("d4", false, 9, "g0", Decision::UnseenDm, Family::Dm)};
    CHECK(predicted_labels(rs) == std::vector<std::string>{"g0", "unseen-gan", "unseen-dm"});
    CHECK(true_labels(rs) == std::vector<std::string>{"g0", "g4", "d4"});
}
