#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stereobias/corpus.hpp"
#include "stereobias/random.hpp"
#include "stereobias/stereotype.hpp"
#include "support.hpp"

using namespace stereobias;
using doctest::Approx;

namespace {

EmbeddingTable toy_table() {
    EmbeddingTable table(2);
    table.add("women", Eigen::Vector2f(1, 0));
    table.add("illegal", Eigen::Vector2f(1, 1));
    table.add("alien", Eigen::Vector2f(1, -1));
    table.add("kind", Eigen::Vector2f(0, 1));
    table.add("warm", Eigen::Vector2f(1, 1));
    table.add("smart", Eigen::Vector2f(3, 1));
    table.add("able", Eigen::Vector2f(-1, 2));
    return table;
}

}  // namespace

TEST_CASE("cosine examples and scale invariance") {
    CHECK(cosine(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)) == Approx(0.0).scale(1.0));
    CHECK(cosine(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 2)) == Approx(1.0));
    CHECK(cosine(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1)) == Approx(0.70710678).epsilon(1e-8));
    CHECK_THROWS_AS(cosine(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)), InvalidInput);
    CHECK_THROWS_AS(cosine(Eigen::Vector2d(1, 0), Eigen::Vector3d(1, 1, 1)), InvalidInput);
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        Eigen::VectorXd u(5);
        Eigen::VectorXd v(5);
        for (int k = 0; k < 5; ++k) {
            u(k) = rng.normal();
            v(k) = rng.normal();
        }
        const double a = 0.01 + 10.0 * rng.uniform();
        const double b = 0.01 + 10.0 * rng.uniform();
        CHECK(std::abs(cosine(a * u, b * v) - cosine(u, v)) < 1e-10);
    }
}

TEST_CASE("load_embeddings skips malformed lines and keeps first duplicates") {
    testing::TempDir dir;
    EmbeddingLoadReport report;
    const auto table = load_embeddings(dir.write("e.txt", "a 1 2 3\nb 4 5 6\nbad 1 2\na 9 9 9\nc 1 x 3\n"), &report);
    CHECK(table.dimension() == 3);
    CHECK(table.size() == 2);
    CHECK(report.skipped == 2);
    CHECK(report.duplicates == 1);
    CHECK(*table.find("a") == Eigen::Vector3d(1, 2, 3));
    CHECK(load_embeddings(dir.write("h.txt", "2 2\nx 1 0\ny 0 1\n")).size() == 2);
    CHECK_THROWS_AS(load_embeddings(dir.write("none.txt", "only words here\n")), InvalidInput);
}

TEST_CASE("embedding serialization round-trips at nine significant digits") {
    Rng rng(12);
    EmbeddingTable table(4);
    for (int w = 0; w < 30; ++w) {
        Eigen::VectorXf v(4);
        for (int k = 0; k < 4; ++k) v(k) = static_cast<float>(rng.normal(0.0, 3.0));
        table.add("w" + std::to_string(w), v);
    }
    testing::TempDir dir;
    std::ostringstream text;
    table.write(text);
    const auto reloaded = load_embeddings(dir.write("r.txt", text.str()));
    REQUIRE(reloaded.size() == table.size());
    for (std::size_t i = 0; i < table.size(); ++i)
        CHECK((reloaded.vector(i) - table.vector(i)).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("dictionary score examples") {
    const auto table = toy_table();
    const std::vector<std::string> women{"women"};
    const auto single = dictionary_score(women, Dictionary::make("w", {"kind"}), table);
    CHECK(single.score == Approx(0.0).scale(1.0));
    CHECK(single.coverage == 1.0);

    const auto twin = dictionary_score(women, Dictionary::make("w", {"illegal", "warm"}), table);
    CHECK(twin.score == Approx(cosine(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1))));

    const auto three = dictionary_score(women, Dictionary::make("c", {"smart", "able", "kind", "missing"}), table);
    const double expected = (3.0 / std::sqrt(10.0) + -1.0 / std::sqrt(5.0) + 0.0) / 3.0;
    CHECK(three.score == Approx(expected).epsilon(1e-7));
    CHECK(three.coverage == Approx(0.75));
    CHECK(three.words_used == 3);

    const std::vector<std::string> unknown{"nobody"};
    CHECK_THROWS(dictionary_score(unknown, Dictionary::make("w", {"kind"}), table));
    CHECK_THROWS(dictionary_score(women, Dictionary::make("w", {"zzz"}), table));
    CHECK_THROWS_AS(Dictionary::make("w", {}), InvalidInput);
}

TEST_CASE("dictionary score is order invariant and bounded by its cosines") {
    const auto table = toy_table();
    const std::vector<std::string> group{"illegal", "women"};
    std::vector<std::string> words{"kind", "warm", "smart", "able"};
    const double base = dictionary_score(group, Dictionary::make("d", words), table).score;
    const Eigen::VectorXd rep = *table.mean_vector(group);
    double lo = 1.0;
    double hi = -1.0;
    for (const auto& w : words) {
        lo = std::min(lo, cosine(rep, *table.find(w)));
        hi = std::max(hi, cosine(rep, *table.find(w)));
    }
    CHECK(base >= lo);
    CHECK(base <= hi);
    std::sort(words.begin(), words.end());
    do {
        CHECK(dictionary_score(group, Dictionary::make("d", words), table).score == Approx(base).epsilon(1e-14));
    } while (std::next_permutation(words.begin(), words.end()));
}

TEST_CASE("score_groups composes multiword forms and reports failures") {
    SgtLexicon lexicon;
    lexicon.add("woman", "women");
    lexicon.add("immigrant", "illegal alien");
    lexicon.add("ghost", "spectre");
    const auto table = toy_table();
    const auto result = score_groups(lexicon, Dictionary::make("w", {"kind"}), Dictionary::make("c", {"smart"}), table);
    REQUIRE(result.scores.size() == 2);
    CHECK(result.scores[0].group_id == "woman");
    CHECK(result.scores[0].warmth == Approx(0.0).scale(1.0));
    CHECK(result.scores[0].competence == Approx(3.0 / std::sqrt(10.0)));
    // mean of (1,1) and (1,-1) is (1,0).
    CHECK(result.scores[1].competence == Approx(3.0 / std::sqrt(10.0)));
    REQUIRE(result.failures.size() == 1);
    CHECK(result.failures[0].group_id == "ghost");
}

TEST_CASE("canonical form prefers the first single-word form") {
    SgtLexicon lexicon;
    lexicon.add("m", "muslim people");
    lexicon.add("m", "muslims");
    lexicon.add("m", "islamic");
    lexicon.add("x", "two words");
    CHECK(canonical_form(lexicon, "m").surface_form == "islamic");
    CHECK(canonical_form(lexicon, "x").surface_form == "two words");
}

TEST_CASE("explicit composite examples") {
    const std::vector<SurveyRow> rows{{"p", "g", 8, 8, 1, 3}, {"p", "h", 4.5, 4.5, 4.5, 4.5},
                                      {"q", "g", 2, 7, 5, 6}, {"q", "h", 9, 1, 1, 1}};
    const auto result = explicit_composites(rows);
    REQUIRE(result.composites.size() == 3);
    CHECK(result.composites[0].warmth == Approx(8.0));
    CHECK(result.composites[1].warmth == Approx(4.5));
    CHECK(result.composites[1].competence == Approx(4.5));
    CHECK(result.composites[2].competence == 6.0);
    REQUIRE(result.rejected.size() == 1);
    CHECK(result.rejected[0].index == 3);
    CHECK(explicit_composites(rows, false).composites[0].warmth == Approx(17.0 / 3.0));
}

TEST_CASE("explicit warmth is symmetric and decreasing in violence") {
    for (double f = 1; f <= 8; f += 1)
        for (double h = 1; h <= 8; h += 1) {
            const std::vector<SurveyRow> pair{{"p", "g", f, h, 3, 4}, {"p", "g", h, f, 3, 4}};
            const auto c = explicit_composites(pair).composites;
            CHECK(c[0].warmth == c[1].warmth);
        }
    double previous = 1e9;
    for (double v = 1; v <= 8; v += 0.5) {
        const std::vector<SurveyRow> row{{"p", "g", 5, 5, v, 4}};
        const double w = explicit_composites(row).composites[0].warmth;
        CHECK(w < previous);
        previous = w;
    }
}

TEST_CASE("survey and dictionary loaders") {
    testing::TempDir dir;
    const auto survey = load_survey(dir.write(
        "s.csv", "participant_id,group_id,friendliness,helpfulness,violence,intelligence\np1,g,1,2,3,4\n"));
    REQUIRE(survey.size() == 1);
    CHECK(survey[0].intelligence == 4.0);
    CHECK_THROWS_AS(load_survey(dir.write("bad.csv", "participant_id,group_id\np1,g\n")), ParseError);
    const auto dictionary = load_dictionary(dir.write("d.txt", "# warmth\nKind\n\nkind\nwarm\n"), "warmth");
    CHECK(dictionary.words == std::vector<std::string>{"kind", "warm"});
}
