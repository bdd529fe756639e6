#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stereobias/corpus.hpp"
#include "stereobias/glm.hpp"
#include "stereobias/stereotype.hpp"

namespace stereobias {

/// Item -> group for items whose text mentions exactly one group.
std::unordered_map<std::string, std::string> single_group_items(const PostTable& posts, const SgtLexicon& lexicon);

/// One row per (participant, group) with annotations on that group's items
/// and an explicit rating of the group.
struct ParticipantGroupRow {
    std::string participant_id;
    std::string group_id;
    long long n_items = 0;
    long long hate_count = 0;
    double disagreement = 0.0;   // mean item-level disagreement, NaN without co-annotators
    long long comparisons = 0;   // co-annotator comparisons behind disagreement
    double warmth = 0.0;
    double competence = 0.0;
};

/// Rows in annotator order, then lexicon group order.
std::vector<ParticipantGroupRow> participant_group_table(const AnnotationSet& annotations, const PostTable& posts,
                                                         const SgtLexicon& lexicon,
                                                         std::span<const ExplicitComposite> composites);

/// Poisson model of hate_count on warmth and competence with group
/// indicator columns and offset log(n_items).
GlmFit fit_hate_count_model(std::span<const ParticipantGroupRow> rows);

/// Binomial model of the disagreement fraction, weighted by comparisons,
/// on warmth and competence with group indicator columns. Rows without
/// comparisons are skipped.
GlmFit fit_disagreement_model(std::span<const ParticipantGroupRow> rows);

}  // namespace stereobias
