#include "stereobias/disagreement.hpp"

#include <algorithm>
#include <map>

#include "stereobias/error.hpp"

namespace stereobias {

namespace {

__extension__ using Wide = __int128;

Wide gcd(Wide a, Wide b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
        const Wide t = a % b;
        a = b;
        b = t;
    }
    return a;
}

// Exact sum of non-negative fractions; denominators here are small rater
// counts, so the running denominator stays tiny.
class FractionSum {
public:
    void add(long long numerator, long long denominator) {
        const Wide g = gcd(den_, denominator);
        const Wide scale = denominator / g;
        num_ = num_ * scale + static_cast<Wide>(numerator) * (den_ / g);
        den_ *= scale;
        const Wide r = gcd(num_, den_);
        if (r > 1) {
            num_ /= r;
            den_ /= r;
        }
    }

    /// Sum divided by `count`, with a single floating division.
    double mean(long long count) const {
        return static_cast<double>(num_) / (static_cast<double>(den_) * static_cast<double>(count));
    }

private:
    Wide num_ = 0;
    Wide den_ = 1;
};

long long row_total(const CountMatrix& counts, Eigen::Index i) { return counts.row(i).sum(); }

void check_counts(const CountMatrix& counts) {
    if (counts.cols() < 1) throw InvalidInput("count table needs at least one category");
    if ((counts.array() < 0).any()) throw InvalidInput("count table has negative entries");
}

}  // namespace

double item_disagreement(long long n1, long long n0) {
    if (n1 < 0 || n0 < 0) throw InvalidInput("label counts must be non-negative");
    const long long n = n1 + n0;
    if (n < 2) throw InvalidInput("item disagreement needs at least two labels");
    const Wide disagreeing = static_cast<Wide>(2) * n1 * n0;  // n1*n0 / (n(n-1)/2)
    const Wide pairs = static_cast<Wide>(n) * (n - 1);
    const Wide g = gcd(disagreeing, pairs);
    if (g == 0) return 0.0;
    return static_cast<double>(disagreeing / g) / static_cast<double>(pairs / g);
}

std::vector<DisagreementSummary> item_disagreements(const AnnotationSet& annotations) {
    std::vector<DisagreementSummary> out;
    for (const auto& item : annotations.items()) {
        const auto c = annotations.counts(item);
        if (c.total() < 2) continue;
        out.push_back({item, c.n1, c.n0, item_disagreement(c.n1, c.n0)});
    }
    return out;
}

ParticipantDisagreement participant_item_detail(const AnnotationSet& annotations, std::string_view participant,
                                                std::string_view item) {
    const auto own = annotations.label(item, participant);
    if (!own)
        throw InvalidInput("annotator '" + std::string(participant) + "' did not annotate item '" + std::string(item) +
                           "'");
    long long others = 0;
    long long differing = 0;
    for (const auto index : annotations.item_records(item)) {
        const auto& record = annotations.records()[index];
        if (record.annotator_id == participant) continue;
        ++others;
        if (record.label != *own) ++differing;
    }
    if (others == 0)
        throw InvalidInput("item '" + std::string(item) + "' has no co-annotators for '" + std::string(participant) +
                           "'");
    const Wide g = gcd(differing, others);
    const double d = differing == 0 ? 0.0 : static_cast<double>(differing / g) / static_cast<double>(others / g);
    return {std::string(participant), std::string(item), d, others};
}

double participant_item_disagreement(const AnnotationSet& annotations, std::string_view participant,
                                     std::string_view item) {
    return participant_item_detail(annotations, participant, item).d;
}

double group_level_disagreement(const AnnotationSet& annotations, std::string_view participant,
                                std::span<const std::string> items) {
    if (items.empty()) throw InvalidInput("group-level disagreement needs a non-empty item set");
    FractionSum sum;
    for (const auto& item : items) {
        const auto own = annotations.label(item, participant);
        if (!own)
            throw InvalidInput("annotator '" + std::string(participant) + "' did not annotate item '" + item + "'");
        long long others = 0;
        long long differing = 0;
        for (const auto index : annotations.item_records(item)) {
            const auto& record = annotations.records()[index];
            if (record.annotator_id == participant) continue;
            ++others;
            if (record.label != *own) ++differing;
        }
        if (others == 0) throw InvalidInput("item '" + item + "' has no co-annotators");
        sum.add(differing, others);
    }
    return sum.mean(static_cast<long long>(items.size()));
}

std::vector<ParticipantDisagreement> participant_disagreements(const AnnotationSet& annotations) {
    std::vector<ParticipantDisagreement> out;
    out.reserve(annotations.size());
    for (const auto& record : annotations.records()) {
        if (annotations.counts(record.item_id).total() < 2) continue;
        out.push_back(participant_item_detail(annotations, record.annotator_id, record.item_id));
    }
    return out;
}

CountMatrix label_count_table(const AnnotationSet& annotations) {
    const auto& items = annotations.items();
    CountMatrix table(static_cast<Eigen::Index>(items.size()), 2);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto c = annotations.counts(items[i]);
        table(static_cast<Eigen::Index>(i), 0) = c.n0;
        table(static_cast<Eigen::Index>(i), 1) = c.n1;
    }
    return table;
}

FleissResult fleiss_kappa_detail(const CountMatrix& counts) {
    check_counts(counts);
    std::map<long long, long long> frequency;
    for (Eigen::Index i = 0; i < counts.rows(); ++i) {
        const long long n = row_total(counts, i);
        if (n >= 2) ++frequency[n];
    }
    if (frequency.empty()) throw Undefined("kappa undefined: no item has two or more ratings");
    long long raters = 0;
    long long best = 0;
    for (const auto& [n, f] : frequency) {
        if (f > best) {
            best = f;
            raters = n;
        }
    }

    // kappa = (P - Pe) / (1 - Pe) with P = A / (N n (n-1)), Pe = B / (N n)^2,
    // rearranged to one integer ratio:
    //   (A N n - B (n-1)) / ((n-1) ((N n)^2 - B))
    Wide agree = 0;  // A = sum_i (sum_j n_ij^2 - n)
    Eigen::Matrix<Wide, 1, Eigen::Dynamic> column_totals = Eigen::Matrix<Wide, 1, Eigen::Dynamic>::Zero(counts.cols());
    long long used = 0;
    for (Eigen::Index i = 0; i < counts.rows(); ++i) {
        if (row_total(counts, i) != raters) continue;
        ++used;
        Wide squares = 0;
        for (Eigen::Index j = 0; j < counts.cols(); ++j) {
            squares += static_cast<Wide>(counts(i, j)) * counts(i, j);
            column_totals(j) += counts(i, j);
        }
        agree += squares - raters;
    }
    Wide chance = 0;  // B = sum_j (column total)^2
    for (Eigen::Index j = 0; j < counts.cols(); ++j) chance += column_totals(j) * column_totals(j);
    const Wide total = static_cast<Wide>(used) * raters;
    const Wide denominator = static_cast<Wide>(raters - 1) * (total * total - chance);
    if (denominator == 0) throw Undefined("kappa undefined: all ratings fall in one category");
    const Wide numerator = agree * total - chance * (raters - 1);
    const Wide g = gcd(numerator, denominator);
    const double kappa = static_cast<double>(numerator / g) / static_cast<double>(denominator / g);
    return {kappa, raters, used, counts.rows() - used};
}

double fleiss_kappa(const CountMatrix& counts) { return fleiss_kappa_detail(counts).kappa; }

double mean_observed_agreement(const CountMatrix& counts) {
    check_counts(counts);
    FractionSum sum;
    long long items = 0;
    for (Eigen::Index i = 0; i < counts.rows(); ++i) {
        const long long n = row_total(counts, i);
        if (n < 2) continue;
        long long agreeing = 0;
        for (Eigen::Index j = 0; j < counts.cols(); ++j) agreeing += counts(i, j) * (counts(i, j) - 1);
        sum.add(agreeing, n * (n - 1));
        ++items;
    }
    if (items == 0) throw Undefined("observed agreement undefined: no item has two or more ratings");
    return sum.mean(items);
}

double pabak(const CountMatrix& counts) {
    if (counts.cols() != 2) throw InvalidInput("PABAK is defined here for two categories");
    return 2.0 * mean_observed_agreement(counts) - 1.0;
}

AgreementReport agreement_report(const CountMatrix& counts) {
    AgreementReport report;
    const auto fleiss = fleiss_kappa_detail(counts);
    report.fleiss_kappa = fleiss.kappa;
    report.kappa_raters = fleiss.raters;
    report.kappa_items_used = fleiss.items_used;
    report.kappa_items_dropped = fleiss.items_dropped;
    report.mean_observed_agreement = mean_observed_agreement(counts);
    report.pabak = pabak(counts);
    report.items = counts.rows();
    return report;
}

}  // namespace stereobias
