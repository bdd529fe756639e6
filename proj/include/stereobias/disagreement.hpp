#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "stereobias/corpus.hpp"

namespace stereobias {

/// Items x categories table of rating counts.
using CountMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

struct DisagreementSummary {
    std::string item_id;
    long long n1 = 0;
    long long n0 = 0;
    double d = 0.0;
};

struct ParticipantDisagreement {
    std::string participant_id;
    std::string item_id;  // item id, or item-set id for group-level values
    double d = 0.0;
    long long comparisons = 0;  // co-annotator label comparisons behind d
};

struct FleissResult {
    double kappa = 0.0;
    long long raters = 0;  // ratings per item used
    long long items_used = 0;
    long long items_dropped = 0;
};

struct AgreementReport {
    double fleiss_kappa = 0.0;
    double pabak = 0.0;
    double mean_observed_agreement = 0.0;
    long long kappa_raters = 0;
    long long kappa_items_used = 0;
    long long kappa_items_dropped = 0;
    long long items = 0;
};

/// Fraction of coder pairs that disagree: n1*n0 / C(n1+n0, 2).
/// Exact integer arithmetic with one final division. Requires n1+n0 >= 2.
double item_disagreement(long long n1, long long n0);

std::vector<DisagreementSummary> item_disagreements(const AnnotationSet& annotations);

/// Fraction of the other annotators of `item` whose label differs from
/// `participant`'s label.
double participant_item_disagreement(const AnnotationSet& annotations, std::string_view participant,
                                     std::string_view item);

/// Same value plus the number of co-annotators compared.
ParticipantDisagreement participant_item_detail(const AnnotationSet& annotations, std::string_view participant,
                                                std::string_view item);

/// Unweighted mean of participant_item_disagreement over `items`.
double group_level_disagreement(const AnnotationSet& annotations, std::string_view participant,
                                std::span<const std::string> items);

/// Every (participant, item) pair that has at least one co-annotator, in record order.
std::vector<ParticipantDisagreement> participant_disagreements(const AnnotationSet& annotations);

/// Binary count table (columns: n0, n1) in item order.
CountMatrix label_count_table(const AnnotationSet& annotations);

/// Fleiss' kappa. Items whose rating count differs from the most common
/// count (ties resolved to the smaller count) are dropped and tallied.
FleissResult fleiss_kappa_detail(const CountMatrix& counts);
double fleiss_kappa(const CountMatrix& counts);

/// Mean over items of the pairwise observed agreement; items with fewer
/// than two ratings are ignored.
double mean_observed_agreement(const CountMatrix& counts);

/// Prevalence- and bias-adjusted kappa for two categories: 2*P - 1.
double pabak(const CountMatrix& counts);

AgreementReport agreement_report(const CountMatrix& counts);

}  // namespace stereobias
