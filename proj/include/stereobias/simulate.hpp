#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stereobias/corpus.hpp"
#include "stereobias/psychometrics.hpp"
#include "stereobias/stereotype.hpp"

namespace stereobias {

/// Annotator population for the rating-study scenario.
struct SimConfig {
    int n_participants = 500;
    int n_groups = 8;
    int items_per_group = 7;
    int annotators_per_item = 0;     // 0 means every participant annotates every item
    double competence_effect = 0.3;  // b in logit P = theta + b (C - center) - delta
    double rating_center = 4.5;      // midpoint of the 1-8 scale
    double rating_sd = 1.5;          // spread of competence ratings within a group
    double competence_mean_low = 3.0;
    double competence_mean_high = 6.0;
    double warmth_mean_low = 3.0;
    double warmth_mean_high = 6.0;
    double theta_sd = 1.0;
    double delta_sd = 1.0;

    /// Throws InvalidInput when a count or parameter is unusable.
    void validate() const;
};

struct SimTruth {
    std::vector<std::string> participant_ids;
    std::vector<std::string> group_ids;
    std::vector<std::string> item_ids;
    std::vector<int> item_group;   // group index of each item
    Eigen::VectorXd theta;         // per participant
    Eigen::VectorXd delta;         // per item
    Eigen::MatrixXd competence;    // participants x groups, 1-8
    Eigen::MatrixXd warmth;        // participants x groups, explicit composite
    double competence_effect = 0.0;
    double rating_center = 4.5;
    std::vector<std::string> coefficient_names;  // planted regression coefficients
    Eigen::VectorXd coefficients;
};

struct SimData {
    AnnotationSet annotations;
    PostTable posts;
    SgtLexicon lexicon;
    std::vector<SurveyRow> survey;
    ResponseMatrix responses;    // participants x items, kMissing where unassigned
    Eigen::MatrixXi assignment;  // 1 where the participant annotates the item
    SimTruth truth;
};

/// Group token for index g: a fixed list of plural group nouns, then groupNN.
std::string simulated_group_name(int g);

/// Generative probability that participant p labels item i as hateful.
double label_probability(const SimTruth& truth, Eigen::Index participant, Eigen::Index item);

/// One labelling pass over the assigned cells; unassigned cells are kMissing.
Eigen::MatrixXi simulate_labels(const SimTruth& truth, const Eigen::Ref<const Eigen::MatrixXi>& assignment,
                                std::uint64_t seed);

/// Draws truth, assignment, survey ratings, posts with one group mention
/// each, and labels. Deterministic in (config, seed).
SimData simulate_annotations(const SimConfig& config, std::uint64_t seed);

struct RaschSimulation {
    ResponseMatrix responses;
    SimTruth truth;  // theta, delta and ids only
};

/// Complete persons x items matrix from the Rasch model with standard
/// normal tendencies and difficulties.
RaschSimulation simulate_rasch(Eigen::Index persons, Eigen::Index items, std::uint64_t seed);

/// Corpus for the classifier-audit scenario.
struct AuditSimConfig {
    int n_items = 2000;
    int n_groups = 12;
    int annotators = 3;
    int dimension = 16;
    int content_tokens = 8;        // non-group tokens per post
    int vocabulary_per_class = 40;
    int dictionary_words = 10;
    double hate_rate = 0.3;
    double flip_rate = 0.1;        // per-annotator label noise
    double hate_word_rate_hateful = 0.6;
    double hate_word_rate_benign = 0.2;
    double competence_shift = 2.0; // group competence loading on the axis the classifier uses
    double noise_sd = 0.3;

    void validate() const;
};

struct AuditSimulation {
    PostTable posts;
    AnnotationSet annotations;
    SgtLexicon lexicon;
    EmbeddingTable embeddings;
    Dictionary warmth;
    Dictionary competence;
    std::vector<std::string> group_ids;
    Eigen::VectorXd group_competence;  // planted, in [-1, 1]
    Eigen::VectorXd group_warmth;
    Eigen::VectorXi true_labels;       // per post, before annotator noise
};

/// Low-competence groups sit closer to the hateful region of embedding
/// space, so a classifier on mean embeddings flags their benign posts more
/// often.
AuditSimulation simulate_audit_corpus(const AuditSimConfig& config, std::uint64_t seed);

struct RecoveryEstimates {
    Eigen::VectorXd theta;         // empty to skip
    Eigen::VectorXd delta;         // empty to skip
    Eigen::VectorXd coefficients;  // empty to skip
};

struct RecoveryReport {
    double theta_r = 0.0;  // NaN when not compared
    double delta_r = 0.0;
    Eigen::Index theta_n = 0;
    Eigen::Index delta_n = 0;
    Eigen::Index coefficients_compared = 0;
    Eigen::Index sign_matches = 0;
};

/// Pearson correlations with the truth and sign agreement of coefficients.
/// Throws InvalidInput when a non-empty estimate has the wrong length.
RecoveryReport recovery_report(const RecoveryEstimates& estimates, const SimTruth& truth);

}  // namespace stereobias
