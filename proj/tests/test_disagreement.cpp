#include <doctest.h>

#include <algorithm>
#include <vector>

#include "stereobias/disagreement.hpp"
#include "stereobias/random.hpp"

using namespace stereobias;
using doctest::Approx;

namespace {

double brute_force_pairs(long long n1, long long n0) {
    std::vector<int> coders(static_cast<std::size_t>(n1), 1);
    coders.resize(static_cast<std::size_t>(n1 + n0), 0);
    long long pairs = 0;
    long long differing = 0;
    for (std::size_t a = 0; a < coders.size(); ++a)
        for (std::size_t b = a + 1; b < coders.size(); ++b) {
            ++pairs;
            differing += coders[a] != coders[b];
        }
    return static_cast<double>(differing) / static_cast<double>(pairs);
}

CountMatrix table(std::initializer_list<std::pair<long long, long long>> rows) {
    CountMatrix counts(static_cast<Eigen::Index>(rows.size()), 2);
    Eigen::Index r = 0;
    for (const auto& [a, b] : rows) {
        counts(r, 0) = a;
        counts(r, 1) = b;
        ++r;
    }
    return counts;
}

AnnotationSet item_with(int own, std::vector<int> others) {
    AnnotationSet set;
    set.add({"i", "p", own});
    for (std::size_t k = 0; k < others.size(); ++k) set.add({"i", "o" + std::to_string(k), others[k]});
    return set;
}

}  // namespace

TEST_CASE("item disagreement examples") {
    CHECK(item_disagreement(0, 5) == 0.0);
    CHECK(item_disagreement(2, 1) == Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(item_disagreement(2, 2) == Approx(4.0 / 6.0).epsilon(1e-15));
    CHECK_THROWS(item_disagreement(1, 0));
    CHECK_THROWS(item_disagreement(0, 0));
}

TEST_CASE("item disagreement matches pair enumeration and is symmetric") {
    for (long long n1 = 0; n1 <= 8; ++n1)
        for (long long n0 = 0; n1 + n0 <= 8; ++n0) {
            if (n1 + n0 < 2) continue;
            CHECK(item_disagreement(n1, n0) == Approx(brute_force_pairs(n1, n0)).epsilon(1e-12));
            CHECK(item_disagreement(n1, n0) == item_disagreement(n0, n1));
            CHECK((item_disagreement(n1, n0) == 0.0) == (n1 * n0 == 0));
        }
    for (long long n = 2; n <= 9; ++n) {
        double best = -1.0;
        long long argmax = -1;
        for (long long n1 = 0; n1 <= n; ++n1)
            if (item_disagreement(n1, n - n1) > best + 1e-15) {
                best = item_disagreement(n1, n - n1);
                argmax = n1;
            }
        CHECK(argmax == n / 2);
    }
}

TEST_CASE("item disagreement is exact for large counts") {
    const long long big = 3'000'000'000LL;
    CHECK(item_disagreement(big, big) == Approx(static_cast<double>(big) / static_cast<double>(2 * big - 1)));
}

TEST_CASE("participant item disagreement examples") {
    CHECK(participant_item_disagreement(item_with(1, {1, 1}), "p", "i") == 0.0);
    CHECK(participant_item_disagreement(item_with(1, {0, 0, 0}), "p", "i") == 1.0);
    CHECK(participant_item_disagreement(item_with(0, {1, 0, 1}), "p", "i") == Approx(2.0 / 3.0));
    const auto detail = participant_item_detail(item_with(0, {1, 0, 1}), "p", "i");
    CHECK(detail.comparisons == 3);
    CHECK_THROWS(participant_item_disagreement(item_with(1, {}), "p", "i"));
    CHECK_THROWS(participant_item_disagreement(item_with(1, {0}), "q", "i"));
}

TEST_CASE("group level disagreement is the mean of item values") {
    AnnotationSet set;
    // item a: p agrees with both others; item b: p disagrees with both.
    set.add({"a", "p", 1});
    set.add({"a", "x", 1});
    set.add({"a", "y", 1});
    set.add({"b", "p", 0});
    set.add({"b", "x", 1});
    set.add({"b", "y", 1});
    // items c, d, e give 1/3, 2/3, 1.
    set.add({"c", "p", 1});
    for (int k = 0; k < 3; ++k) set.add({"c", "c" + std::to_string(k), k == 0 ? 0 : 1});
    set.add({"d", "p", 1});
    for (int k = 0; k < 3; ++k) set.add({"d", "d" + std::to_string(k), k == 0 ? 1 : 0});
    set.add({"e", "p", 1});
    for (int k = 0; k < 3; ++k) set.add({"e", "e" + std::to_string(k), 0});

    const std::vector<std::string> ab{"a", "b"};
    CHECK(group_level_disagreement(set, "p", ab) == Approx(0.5));
    const std::vector<std::string> single{"b"};
    CHECK(group_level_disagreement(set, "p", single) == participant_item_disagreement(set, "p", "b"));
    const std::vector<std::string> cde{"c", "d", "e"};
    CHECK(group_level_disagreement(set, "p", cde) == Approx(2.0 / 3.0));
    CHECK_THROWS(group_level_disagreement(set, "p", std::vector<std::string>{}));
}

TEST_CASE("group level disagreement lies between its per-item inputs") {
    Rng rng(3);
    AnnotationSet set;
    std::vector<std::string> items;
    for (int i = 0; i < 25; ++i) {
        const auto id = "t" + std::to_string(i);
        items.push_back(id);
        set.add({id, "p", static_cast<int>(rng.below(2))});
        const auto others = 1 + rng.below(5);
        for (std::uint64_t k = 0; k < others; ++k) set.add({id, "o" + std::to_string(k), static_cast<int>(rng.below(2))});
    }
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> subset;
        for (const auto& id : items)
            if (rng.bernoulli(0.4)) subset.push_back(id);
        if (subset.empty()) continue;
        double lo = 1.0;
        double hi = 0.0;
        for (const auto& id : subset) {
            const double v = participant_item_disagreement(set, "p", id);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double g = group_level_disagreement(set, "p", subset);
        CHECK(g >= lo - 1e-15);
        CHECK(g <= hi + 1e-15);
    }
}

TEST_CASE("fleiss kappa examples") {
    CHECK(fleiss_kappa(table({{3, 0}, {0, 3}})) == Approx(1.0));
    CHECK(fleiss_kappa(table({{4, 0}, {0, 4}, {4, 0}})) == Approx(1.0));
    CHECK(fleiss_kappa(table({{1, 2}, {2, 1}, {3, 0}, {0, 3}})) == Approx(0.33333333333333326).epsilon(1e-12));
    CHECK_THROWS(fleiss_kappa(table({{3, 0}, {3, 0}})));
}

TEST_CASE("fleiss kappa drops items with a nonconforming rater count") {
    const auto result = fleiss_kappa_detail(table({{1, 2}, {2, 1}, {3, 0}, {0, 3}, {1, 1}, {4, 1}}));
    CHECK(result.raters == 3);
    CHECK(result.items_used == 4);
    CHECK(result.items_dropped == 2);
    CHECK(result.kappa == Approx(1.0 / 3.0));
}

TEST_CASE("pabak examples and identities") {
    CHECK(pabak(table({{3, 0}, {0, 3}})) == Approx(1.0));
    CHECK(pabak(table({{2, 1}, {2, 1}, {1, 2}})) == Approx(-1.0 / 3.0));
    const auto counts = table({{2, 1}, {1, 2}, {3, 0}, {0, 3}, {2, 2}, {4, 0}});
    const auto report = agreement_report(counts);
    CHECK(report.pabak == Approx(2.0 * report.mean_observed_agreement - 1.0).epsilon(1e-15));
    CHECK(report.pabak >= -1.0);
    CHECK(report.pabak <= 1.0);
    // Balanced marginals give expected agreement 0.5, where kappa equals pabak.
    const auto balanced = table({{2, 1}, {1, 2}, {3, 0}, {0, 3}});
    CHECK(fleiss_kappa(balanced) == Approx(pabak(balanced)).epsilon(1e-12));
}

TEST_CASE("dataset-level helpers agree with the pure formulas") {
    AnnotationSet set;
    set.add({"a", "x", 1});
    set.add({"a", "y", 1});
    set.add({"a", "z", 0});
    set.add({"b", "x", 0});
    set.add({"b", "y", 0});
    const auto rows = item_disagreements(set);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].d == Approx(2.0 / 3.0));
    CHECK(rows[1].d == 0.0);
    const auto counts = label_count_table(set);
    CHECK(counts(0, 0) == 1);
    CHECK(counts(0, 1) == 2);
    const auto participants = participant_disagreements(set);
    CHECK(participants.size() == 5);
    for (const auto& row : participants) {
        CHECK(row.d >= 0.0);
        CHECK(row.d <= 1.0);
    }
}
