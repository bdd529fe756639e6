#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "stereobias/audit.hpp"
#include "stereobias/error.hpp"
#include "stereobias/simulate.hpp"
#include "support.hpp"

using namespace stereobias;
using doctest::Approx;

namespace {

std::vector<PredictionRecord> records(std::initializer_list<std::tuple<const char*, int, int>> rows) {
    std::vector<PredictionRecord> out;
    for (const auto& [item, predicted, majority] : rows) out.push_back({0, item, predicted, majority});
    return out;
}

AuditSimConfig small_audit() {
    AuditSimConfig config;
    config.n_items = 400;
    config.n_groups = 6;
    return config;
}

}  // namespace

TEST_CASE("splits partition the items") {
    const auto plan = make_splits(10, 0.8, 5, 42);
    CHECK(plan.iterations() == 5);
    for (int it = 0; it < 5; ++it) {
        const auto& train = plan.train[static_cast<std::size_t>(it)];
        const auto& test = plan.test[static_cast<std::size_t>(it)];
        CHECK(train.size() == 8);
        CHECK(test.size() == 2);
        std::vector<Eigen::Index> all(train);
        all.insert(all.end(), test.begin(), test.end());
        std::sort(all.begin(), all.end());
        std::vector<Eigen::Index> expected(10);
        std::iota(expected.begin(), expected.end(), 0);
        CHECK(all == expected);
    }
    const auto again = make_splits(10, 0.8, 5, 42);
    CHECK(again.train == plan.train);
    CHECK(make_splits(10, 0.8, 5, 43).train != plan.train);
    CHECK_THROWS_AS(make_splits(10, 1.0, 5, 1), InvalidInput);
    CHECK_THROWS_AS(make_splits(10, 0.01, 5, 1), InvalidInput);
    CHECK_THROWS_AS(make_splits(1, 0.5, 5, 1), InvalidInput);
}

TEST_CASE("test-set membership frequency concentrates near the test fraction") {
    const Eigen::Index n = 5533;
    const auto plan = make_splits(n, 0.8, 100, 7);
    std::vector<int> hits(static_cast<std::size_t>(n), 0);
    for (const auto& test : plan.test)
        for (const auto i : test) ++hits[static_cast<std::size_t>(i)];
    double sum = 0.0;
    double squares = 0.0;
    for (const int h : hits) {
        CHECK(h >= 1);
        sum += h;
        squares += static_cast<double>(h) * h;
    }
    const double mean = sum / static_cast<double>(n);
    const double variance = squares / static_cast<double>(n) - mean * mean;
    CHECK(mean / 100.0 == Approx(1107.0 / 5533.0).epsilon(1e-12));
    // Each item's count is Binomial(100, 0.2): variance 16.
    CHECK(variance > 14.0);
    CHECK(variance < 18.0);
}

TEST_CASE("tally examples") {
    MentionIndex mentions;
    for (const char* item : {"a", "b", "c", "d"}) mentions.add_mention(item, "g");
    const auto correct = tally_errors(records({{"a", 0, 0}, {"b", 0, 0}, {"c", 1, 1}, {"d", 1, 1}}), mentions);
    CHECK(correct[0].n_fp == 0);
    CHECK(correct[0].n_fn == 0);

    const auto mixed = tally_errors(records({{"a", 1, 0}, {"b", 0, 0}, {"c", 0, 1}, {"d", 1, 1}}), mentions);
    REQUIRE(mixed.size() == 1);
    CHECK(mixed[0].n_fp == 1);
    CHECK(mixed[0].n_fn == 1);
    CHECK(mixed[0].fp_ratio == 0.5);
    CHECK(mixed[0].fn_ratio == 0.5);

    const auto total = tally_errors(records({{"a", 1, 0}, {"b", 0, 0}, {"c", 0, 1}, {"d", 1, 1}}), mentions,
                                    RatioDenominator::Total);
    CHECK(total[0].fp_ratio == 0.25);
}

TEST_CASE("an item mentioning two groups counts for both") {
    MentionIndex mentions;
    mentions.add_mention("x", "jews");
    mentions.add_mention("x", "muslims");
    mentions.add_item("plain");
    const auto stats = tally_errors(records({{"x", 1, 0}, {"plain", 1, 0}}), mentions);
    REQUIRE(stats.size() == 2);
    for (const auto& s : stats) {
        CHECK(s.n_fp == 1);
        CHECK(s.fp_ratio == 1.0);
    }
    CHECK_THROWS_AS(tally_errors(records({{"unknown", 1, 0}}), mentions), InvalidInput);
}

TEST_CASE("tallies are conserved on a simulated audit") {
    const auto sim = simulate_audit_corpus(small_audit(), 3);
    AuditConfig config;
    config.iterations = 4;
    config.seed = 3;
    const auto run = run_baseline_audit(sim.posts, sim.annotations, sim.embeddings, config);
    const MentionIndex mentions(sim.posts, sim.lexicon);
    const auto stats = tally_errors(run.predictions, mentions);
    long long pairs = 0;
    for (const auto& p : run.predictions) pairs += static_cast<long long>(mentions.groups(p.item_id).size());
    long long tallied = 0;
    for (const auto& s : stats) {
        tallied += s.n_total;
        CHECK(s.n_total == s.n_neg + s.n_pos);
        CHECK(s.n_fp <= s.n_neg);
        CHECK(s.n_fn <= s.n_pos);
        CHECK(s.fp_ratio >= 0.0);
        CHECK(s.fp_ratio <= 1.0);
        CHECK(s.fn_ratio >= 0.0);
        CHECK(s.fn_ratio <= 1.0);
    }
    CHECK(tallied == pairs);
    for (const auto& p : run.predictions) {
        const auto& test = run.plan.test[static_cast<std::size_t>(p.iteration)];
        const auto it = std::find(run.data.item_ids.begin(), run.data.item_ids.end(), p.item_id);
        const auto index = static_cast<Eigen::Index>(it - run.data.item_ids.begin());
        CHECK(std::binary_search(test.begin(), test.end(), index));
    }
}

TEST_CASE("audit results do not depend on threads or iteration order") {
    const auto sim = simulate_audit_corpus(small_audit(), 5);
    AuditConfig config;
    config.iterations = 6;
    config.seed = 11;
    const MentionIndex mentions(sim.posts, sim.lexicon);
    const auto serial = run_baseline_audit(sim.posts, sim.annotations, sim.embeddings, config);
    config.threads = 4;
    const auto parallel = run_baseline_audit(sim.posts, sim.annotations, sim.embeddings, config);
    const std::vector<int> order{5, 2, 0, 4, 1, 3};
    config.threads = 1;
    const auto reordered = run_baseline_audit(sim.posts, sim.annotations, sim.embeddings, config, order);
    const auto base = tally_errors(serial.predictions, mentions);
    CHECK(tally_errors(parallel.predictions, mentions) == base);
    CHECK(tally_errors(reordered.predictions, mentions) == base);
    auto same = [](const std::vector<PredictionRecord>& a, const std::vector<PredictionRecord>& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].iteration != b[i].iteration || a[i].item_id != b[i].item_id || a[i].predicted != b[i].predicted)
                return false;
        return true;
    };
    CHECK(same(serial.predictions, parallel.predictions));
    CHECK(same(serial.predictions, reordered.predictions));
    const std::vector<int> bad{0, 0, 1, 2, 3, 4};
    CHECK_THROWS_AS(run_baseline_audit(sim.posts, sim.annotations, sim.embeddings, config, bad), InvalidInput);
}

TEST_CASE("baseline separates clusters and is label-symmetric") {
    EmbeddingTable table(2);
    table.add("good", Eigen::Vector2f(2, 1));
    table.add("nice", Eigen::Vector2f(3, -1));
    table.add("bad", Eigen::Vector2f(-2, 1));
    table.add("evil", Eigen::Vector2f(-3, -1));
    const std::vector<TrainingExample> examples{{"good nice", 0}, {"good", 0}, {"nice", 0}, {"nice good good", 0},
                                                {"bad evil", 1},  {"bad", 1},  {"evil", 1}, {"evil evil bad", 1}};
    const auto model = train_baseline(examples, table);
    for (const auto& e : examples) CHECK(predict_baseline(model, e.text, table) == e.label);

    auto flipped = examples;
    for (auto& e : flipped) e.label = 1 - e.label;
    const auto mirror = train_baseline(flipped, table);
    CHECK((mirror.weights + model.weights).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(mirror.bias == Approx(-model.bias).scale(1.0).epsilon(1e-8));

    CHECK(predict_baseline(model, "unknown words", table) == (model.bias >= 0.0 ? 1 : 0));
    BaselineModel boundary;
    boundary.weights = Eigen::Vector2d(1, 0);
    boundary.bias = 0.0;
    CHECK(predict_baseline(boundary, Eigen::Vector2d(0, 5)) == 1);

    const std::vector<TrainingExample> one_class{{"good", 1}, {"bad", 1}};
    CHECK_THROWS_AS(train_baseline(one_class, table), InvalidInput);
}

TEST_CASE("prediction file loader") {
    testing::TempDir dir;
    const auto rows = load_predictions(dir.write("p.csv", "iteration,item_id,predicted,majority\n0,a,1,0\n1,a,0,0\n"));
    CHECK(rows.size() == 2);
    CHECK(rows[1].iteration == 1);
    CHECK_THROWS_AS(load_predictions(dir.write("d.csv", "iteration,item_id,predicted,majority\n0,a,1,0\n0,a,0,0\n")),
                    ParseError);
    CHECK_THROWS_AS(load_predictions(dir.write("v.csv", "iteration,item_id,predicted,majority\n0,a,3,0\n")),
                    ParseError);
}

TEST_CASE("associate_bias recovers a planted negative association") {
    AuditSimConfig config = small_audit();
    config.n_items = 2000;
    config.n_groups = 12;
    const auto sim = simulate_audit_corpus(config, 1);
    AuditConfig audit;
    audit.iterations = 10;
    audit.seed = 1;
    const auto run = run_baseline_audit(sim.posts, sim.annotations, sim.embeddings, audit);
    const auto stats = tally_errors(run.predictions, MentionIndex(sim.posts, sim.lexicon));
    const auto scores = score_groups(sim.lexicon, sim.warmth, sim.competence, sim.embeddings).scores;
    const auto fit = associate_bias(stats, scores, ErrorKind::FalsePositive, StereotypePredictor::Competence);
    const auto k = fit.index_of("competence");
    CHECK(fit.beta(k) < 0.0);
    CHECK(fit.p_values(k) < 0.05);

    auto flat = scores;
    for (auto& s : flat) s.competence = 0.5;
    try {
        associate_bias(stats, flat, ErrorKind::FalsePositive, StereotypePredictor::Competence);
        FAIL("expected a collinearity error");
    } catch (const InvalidInput& e) {
        CHECK(std::string(e.what()).find("competence") != std::string::npos);
    }
    CHECK_THROWS_AS(associate_bias(std::span(stats).first(2), scores, ErrorKind::FalseNegative,
                                   StereotypePredictor::Warmth),
                    InvalidInput);
    CHECK(to_string(ErrorKind::FalsePositive) == "fp");
    CHECK(to_string(StereotypePredictor::Warmth) == "warmth");
}
