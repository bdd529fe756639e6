#include "stereobias/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "stereobias/error.hpp"
#include "stereobias/random.hpp"
#include "stereobias/stats.hpp"

namespace stereobias {

namespace {

constexpr std::array<const char*, 12> kGroupNames{"muslims", "immigrants", "jews",      "women",
                                                  "refugees", "gays",      "blacks",    "latinos",
                                                  "asians",   "christians", "atheists", "mexicans"};

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string padded(const char* prefix, long long value, int width) {
    std::string digits = std::to_string(value);
    if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
    return prefix + digits;
}

int digits(long long n) {
    int d = 1;
    while (n >= 10) {
        n /= 10;
        ++d;
    }
    return d;
}

// Normal draw redrawn until it rounds onto the 1-8 scale, then rounded.
double scale_rating(Rng& rng, double mean, double sd) {
    for (;;) {
        const double x = rng.normal(mean, sd);
        if (x >= kScaleMin - 0.5 && x < kScaleMax + 0.5) return std::floor(x + 0.5);
    }
}

double spaced(int g, int n, double low, double high) {
    return n > 1 ? low + (high - low) * static_cast<double>(g) / static_cast<double>(n - 1) : 0.5 * (low + high);
}

void require(bool condition, const char* message) {
    if (!condition) throw InvalidInput(message);
}

}  // namespace

void SimConfig::validate() const {
    require(n_participants >= 2, "simulation needs at least two participants");
    require(n_groups >= 2, "simulation needs at least two groups");
    require(items_per_group >= 2, "simulation needs at least two items per group");
    require(annotators_per_item == 0 || (annotators_per_item >= 2 && annotators_per_item <= n_participants),
            "annotators per item must be 0 (all) or between 2 and the number of participants");
    for (const double v : {competence_effect, rating_center, competence_mean_low, competence_mean_high,
                           warmth_mean_low, warmth_mean_high})
        require(std::isfinite(v), "simulation parameters must be finite");
    for (const double v : {rating_sd, theta_sd, delta_sd})
        require(std::isfinite(v) && v > 0.0, "simulation spreads must be positive and finite");
}

std::string simulated_group_name(int g) {
    if (g >= 0 && g < static_cast<int>(kGroupNames.size())) return kGroupNames[static_cast<std::size_t>(g)];
    return padded("group", g, 2);
}

double label_probability(const SimTruth& truth, Eigen::Index participant, Eigen::Index item) {
    const int g = truth.item_group[static_cast<std::size_t>(item)];
    return logistic(truth.theta(participant) +
                    truth.competence_effect * (truth.competence(participant, g) - truth.rating_center) -
                    truth.delta(item));
}

Eigen::MatrixXi simulate_labels(const SimTruth& truth, const Eigen::Ref<const Eigen::MatrixXi>& assignment,
                                std::uint64_t seed) {
    if (assignment.rows() != truth.theta.size() || assignment.cols() != truth.delta.size())
        throw InvalidInput("assignment shape does not match the simulated truth");
    Rng rng = Rng::stream(seed, 1);
    Eigen::MatrixXi labels = Eigen::MatrixXi::Constant(assignment.rows(), assignment.cols(), ResponseMatrix::kMissing);
    for (Eigen::Index p = 0; p < assignment.rows(); ++p)
        for (Eigen::Index i = 0; i < assignment.cols(); ++i)
            if (assignment(p, i) != 0) labels(p, i) = rng.bernoulli(label_probability(truth, p, i)) ? 1 : 0;
    return labels;
}

SimData simulate_annotations(const SimConfig& config, std::uint64_t seed) {
    config.validate();
    const int n_p = config.n_participants;
    const int n_g = config.n_groups;
    const int n_i = n_g * config.items_per_group;

    SimData data;
    SimTruth& truth = data.truth;
    truth.competence_effect = config.competence_effect;
    truth.rating_center = config.rating_center;
    truth.coefficient_names = {"competence"};
    truth.coefficients = Eigen::VectorXd::Constant(1, config.competence_effect);

    for (int p = 0; p < n_p; ++p) truth.participant_ids.push_back(padded("p", p + 1, digits(n_p)));
    for (int g = 0; g < n_g; ++g) truth.group_ids.push_back(simulated_group_name(g));
    for (int i = 0; i < n_i; ++i) {
        truth.item_ids.push_back(padded("i", i + 1, digits(n_i)));
        truth.item_group.push_back(i / config.items_per_group);
    }

    Rng rng = Rng::stream(seed, 0);
    truth.theta.resize(n_p);
    truth.delta.resize(n_i);
    for (int p = 0; p < n_p; ++p) truth.theta(p) = rng.normal(0.0, config.theta_sd);
    for (int i = 0; i < n_i; ++i) truth.delta(i) = rng.normal(0.0, config.delta_sd);

    truth.competence.resize(n_p, n_g);
    truth.warmth.resize(n_p, n_g);
    for (int p = 0; p < n_p; ++p) {
        for (int g = 0; g < n_g; ++g) {
            const double c_mean = spaced(g, n_g, config.competence_mean_low, config.competence_mean_high);
            const double w_mean = spaced(n_g - 1 - g, n_g, config.warmth_mean_low, config.warmth_mean_high);
            SurveyRow row;
            row.participant_id = truth.participant_ids[static_cast<std::size_t>(p)];
            row.group_id = truth.group_ids[static_cast<std::size_t>(g)];
            const double latent = std::clamp(rng.normal(w_mean, config.rating_sd), kScaleMin, kScaleMax);
            row.friendliness = scale_rating(rng, latent, 0.5);
            row.helpfulness = scale_rating(rng, latent, 0.5);
            row.violence = scale_rating(rng, (kScaleMin + kScaleMax) - latent, 0.5);
            row.intelligence = scale_rating(rng, c_mean, config.rating_sd);
            truth.competence(p, g) = row.intelligence;
            truth.warmth(p, g) = (row.friendliness + row.helpfulness + (kScaleMin + kScaleMax) - row.violence) / 3.0;
            data.survey.push_back(std::move(row));
        }
    }

    data.assignment = Eigen::MatrixXi::Ones(n_p, n_i);
    if (config.annotators_per_item != 0 && config.annotators_per_item < n_p) {
        data.assignment.setZero();
        Rng pick = Rng::stream(seed, 2);
        std::vector<int> order(static_cast<std::size_t>(n_p));
        for (int i = 0; i < n_i; ++i) {
            std::iota(order.begin(), order.end(), 0);
            pick.shuffle(order);
            for (int k = 0; k < config.annotators_per_item; ++k) data.assignment(order[static_cast<std::size_t>(k)], i) = 1;
        }
    }

    for (int g = 0; g < n_g; ++g) data.lexicon.add(truth.group_ids[static_cast<std::size_t>(g)], truth.group_ids[static_cast<std::size_t>(g)]);
    for (int i = 0; i < n_i; ++i) {
        const auto& group = truth.group_ids[static_cast<std::size_t>(truth.item_group[static_cast<std::size_t>(i)])];
        data.posts.add({truth.item_ids[static_cast<std::size_t>(i)],
                        "synthetic post " + std::to_string(i + 1) + " about " + group});
    }

    const Eigen::MatrixXi labels = simulate_labels(truth, data.assignment, seed);
    for (int i = 0; i < n_i; ++i)
        for (int p = 0; p < n_p; ++p)
            if (data.assignment(p, i) != 0)
                data.annotations.add({truth.item_ids[static_cast<std::size_t>(i)],
                                      truth.participant_ids[static_cast<std::size_t>(p)], labels(p, i)});

    data.responses.person_ids = truth.participant_ids;
    data.responses.item_ids = truth.item_ids;
    data.responses.values = labels;
    return data;
}

RaschSimulation simulate_rasch(Eigen::Index persons, Eigen::Index items, std::uint64_t seed) {
    if (persons < 2 || items < 2) throw InvalidInput("Rasch simulation needs at least two persons and two items");
    RaschSimulation sim;
    SimTruth& truth = sim.truth;
    Rng rng = Rng::stream(seed, 0);
    truth.theta.resize(persons);
    truth.delta.resize(items);
    for (Eigen::Index p = 0; p < persons; ++p) truth.theta(p) = rng.normal();
    for (Eigen::Index i = 0; i < items; ++i) truth.delta(i) = rng.normal();
    for (Eigen::Index p = 0; p < persons; ++p) truth.participant_ids.push_back(padded("p", p + 1, digits(persons)));
    for (Eigen::Index i = 0; i < items; ++i) truth.item_ids.push_back(padded("i", i + 1, digits(items)));

    sim.responses.person_ids = truth.participant_ids;
    sim.responses.item_ids = truth.item_ids;
    sim.responses.values.resize(persons, items);
    Rng draw = Rng::stream(seed, 1);
    for (Eigen::Index p = 0; p < persons; ++p)
        for (Eigen::Index i = 0; i < items; ++i)
            sim.responses.values(p, i) = draw.bernoulli(logistic(truth.theta(p) - truth.delta(i))) ? 1 : 0;
    return sim;
}

void AuditSimConfig::validate() const {
    require(n_items >= 10, "audit simulation needs at least ten items");
    require(n_groups >= 3, "audit simulation needs at least three groups");
    require(annotators >= 1, "audit simulation needs at least one annotator");
    require(dimension >= 3, "audit simulation needs at least three embedding dimensions");
    require(content_tokens >= 1 && vocabulary_per_class >= 1 && dictionary_words >= 1,
            "audit simulation vocabulary sizes must be positive");
    for (const double r : {hate_rate, flip_rate, hate_word_rate_hateful, hate_word_rate_benign})
        require(r >= 0.0 && r <= 1.0, "audit simulation rates must lie in [0, 1]");
    require(std::isfinite(competence_shift), "competence shift must be finite");
    require(std::isfinite(noise_sd) && noise_sd >= 0.0, "noise spread must be finite and non-negative");
}

AuditSimulation simulate_audit_corpus(const AuditSimConfig& config, std::uint64_t seed) {
    config.validate();
    const Eigen::Index t = config.dimension;
    constexpr Eigen::Index kCompetenceAxis = 0;
    constexpr Eigen::Index kWarmthAxis = 1;

    AuditSimulation sim;
    sim.embeddings = EmbeddingTable(t);
    Rng rng = Rng::stream(seed, 0);

    auto noisy = [&](Eigen::VectorXf base) {
        for (Eigen::Index d = 0; d < t; ++d) base(d) += static_cast<float>(rng.normal(0.0, config.noise_sd));
        return base;
    };
    auto axis = [&](Eigen::Index a, double scale) {
        Eigen::VectorXf v = Eigen::VectorXf::Zero(t);
        v(a) = static_cast<float>(scale);
        return v;
    };

    std::vector<std::string> competence_words;
    std::vector<std::string> warmth_words;
    for (int w = 0; w < config.dictionary_words; ++w) {
        competence_words.push_back(padded("able", w, 2));
        sim.embeddings.add(competence_words.back(), noisy(axis(kCompetenceAxis, 1.0)));
        warmth_words.push_back(padded("kind", w, 2));
        sim.embeddings.add(warmth_words.back(), noisy(axis(kWarmthAxis, 1.0)));
    }
    sim.competence = Dictionary::make("competence", competence_words);
    sim.warmth = Dictionary::make("warmth", warmth_words);

    std::vector<std::string> hateful;
    std::vector<std::string> benign;
    for (int w = 0; w < config.vocabulary_per_class; ++w) {
        hateful.push_back(padded("vile", w, 2));
        sim.embeddings.add(hateful.back(), noisy(axis(kCompetenceAxis, -1.0)));
        benign.push_back(padded("calm", w, 2));
        sim.embeddings.add(benign.back(), noisy(axis(kCompetenceAxis, 1.0)));
    }

    const int n_g = config.n_groups;
    sim.group_competence.resize(n_g);
    sim.group_warmth.resize(n_g);
    std::vector<int> warmth_rank(static_cast<std::size_t>(n_g));
    std::iota(warmth_rank.begin(), warmth_rank.end(), 0);
    rng.shuffle(warmth_rank);
    for (int g = 0; g < n_g; ++g) {
        sim.group_ids.push_back(simulated_group_name(g));
        sim.group_competence(g) = spaced(g, n_g, -1.0, 1.0);
        sim.group_warmth(g) = spaced(warmth_rank[static_cast<std::size_t>(g)], n_g, -1.0, 1.0);
        Eigen::VectorXf v = axis(kCompetenceAxis, config.competence_shift * sim.group_competence(g));
        v(kWarmthAxis) = static_cast<float>(sim.group_warmth(g));
        sim.embeddings.add(sim.group_ids.back(), noisy(v));
        sim.lexicon.add(sim.group_ids.back(), sim.group_ids.back());
    }

    const int width = digits(config.n_items);
    sim.true_labels.resize(config.n_items);
    Rng text_rng = Rng::stream(seed, 1);
    for (int i = 0; i < config.n_items; ++i) {
        const int label = text_rng.bernoulli(config.hate_rate) ? 1 : 0;
        sim.true_labels(i) = label;
        const double hate_word_rate = label == 1 ? config.hate_word_rate_hateful : config.hate_word_rate_benign;
        const auto group = static_cast<std::size_t>(text_rng.below(static_cast<std::uint64_t>(n_g)));
        const auto slot = text_rng.below(static_cast<std::uint64_t>(config.content_tokens + 1));
        std::string text;
        for (int k = 0; k <= config.content_tokens; ++k) {
            if (!text.empty()) text += ' ';
            if (static_cast<std::uint64_t>(k) == slot) {
                text += sim.group_ids[group];
                continue;
            }
            const auto& pool = text_rng.bernoulli(hate_word_rate) ? hateful : benign;
            text += pool[static_cast<std::size_t>(text_rng.below(pool.size()))];
        }
        const std::string id = padded("t", i + 1, width);
        sim.posts.add({id, std::move(text)});
        for (int a = 0; a < config.annotators; ++a) {
            const int observed = text_rng.bernoulli(config.flip_rate) ? 1 - label : label;
            sim.annotations.add({id, padded("a", a + 1, 2), observed});
        }
    }
    return sim;
}

RecoveryReport recovery_report(const RecoveryEstimates& estimates, const SimTruth& truth) {
    RecoveryReport report;
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    auto correlate = [](const Eigen::VectorXd& est, const Eigen::VectorXd& ref, const char* what, Eigen::Index& n) {
        if (est.size() == 0) return nan;
        if (est.size() != ref.size())
            throw InvalidInput(std::string(what) + " estimates have length " + std::to_string(est.size()) +
                               ", truth has " + std::to_string(ref.size()));
        n = est.size();
        return stats::pearson(est, ref);
    };
    report.theta_r = correlate(estimates.theta, truth.theta, "theta", report.theta_n);
    report.delta_r = correlate(estimates.delta, truth.delta, "delta", report.delta_n);
    if (estimates.coefficients.size() != 0) {
        if (estimates.coefficients.size() != truth.coefficients.size())
            throw InvalidInput("coefficient estimates do not match the planted coefficients");
        report.coefficients_compared = truth.coefficients.size();
        for (Eigen::Index k = 0; k < truth.coefficients.size(); ++k) {
            const auto sign = [](double v) { return (v > 0.0) - (v < 0.0); };
            if (sign(estimates.coefficients(k)) == sign(truth.coefficients(k))) ++report.sign_matches;
        }
    }
    return report;
}

}  // namespace stereobias
