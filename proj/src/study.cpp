#include "stereobias/study.hpp"

#include <cmath>
#include <limits>

#include "stereobias/disagreement.hpp"
#include "stereobias/error.hpp"

namespace stereobias {

namespace {

std::string joined(std::string_view a, std::string_view b) {
    std::string key(a);
    key += '\x1f';
    key += b;
    return key;
}

DesignMatrix stereotype_design(std::span<const ParticipantGroupRow> rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::VectorXd warmth(n);
    Eigen::VectorXd competence(n);
    std::vector<std::string> groups;
    groups.reserve(rows.size());
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        warmth(r) = row.warmth;
        competence(r) = row.competence;
        groups.push_back(row.group_id);
    }
    DesignMatrix design = DesignMatrix::intercept_only(n);
    design.add_column("warmth", warmth);
    design.add_column("competence", competence);
    const DummyColumns dummies = cluster_dummies(groups, "group");
    design.add_columns(dummies.columns, dummies.names);
    return design;
}

}  // namespace

std::unordered_map<std::string, std::string> single_group_items(const PostTable& posts, const SgtLexicon& lexicon) {
    std::unordered_map<std::string, std::string> out;
    for (const auto& post : posts) {
        const auto mentions = match_sgts(post.text, lexicon, post.id);
        if (mentions.empty()) continue;
        bool single = true;
        for (const auto& m : mentions) single = single && m.group_id == mentions.front().group_id;
        if (single) out.emplace(post.id, mentions.front().group_id);
    }
    return out;
}

std::vector<ParticipantGroupRow> participant_group_table(const AnnotationSet& annotations, const PostTable& posts,
                                                         const SgtLexicon& lexicon,
                                                         std::span<const ExplicitComposite> composites) {
    const auto item_group = single_group_items(posts, lexicon);
    std::unordered_map<std::string, const ExplicitComposite*> rating;
    for (const auto& c : composites) rating.emplace(joined(c.participant_id, c.group_id), &c);

    std::unordered_map<std::string, std::size_t> group_slot;
    for (std::size_t g = 0; g < lexicon.groups().size(); ++g) group_slot.emplace(lexicon.groups()[g], g);

    std::vector<ParticipantGroupRow> rows;
    std::vector<std::vector<std::string>> items_by_group(lexicon.groups().size());
    for (const auto& participant : annotations.annotators()) {
        for (auto& items : items_by_group) items.clear();
        for (const auto index : annotations.annotator_records(participant)) {
            const auto& record = annotations.records()[index];
            const auto it = item_group.find(record.item_id);
            if (it == item_group.end()) continue;
            items_by_group[group_slot.at(it->second)].push_back(record.item_id);
        }
        for (std::size_t g = 0; g < items_by_group.size(); ++g) {
            const auto& items = items_by_group[g];
            if (items.empty()) continue;
            const auto& group = lexicon.groups()[g];
            const auto r = rating.find(joined(participant, group));
            if (r == rating.end()) continue;

            ParticipantGroupRow row;
            row.participant_id = participant;
            row.group_id = group;
            row.n_items = static_cast<long long>(items.size());
            row.warmth = r->second->warmth;
            row.competence = r->second->competence;
            std::vector<std::string> compared;
            for (const auto& item : items) {
                row.hate_count += *annotations.label(item, participant);
                const long long others = annotations.counts(item).total() - 1;
                if (others > 0) {
                    row.comparisons += others;
                    compared.push_back(item);
                }
            }
            row.disagreement = compared.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : group_level_disagreement(annotations, participant, compared);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

GlmFit fit_hate_count_model(std::span<const ParticipantGroupRow> rows) {
    if (rows.empty()) throw InvalidInput("no participant-group rows to model");
    DesignMatrix design = stereotype_design(rows);
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::VectorXd y(n);
    design.offset.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        y(r) = static_cast<double>(rows[static_cast<std::size_t>(r)].hate_count);
        design.offset(r) = std::log(static_cast<double>(rows[static_cast<std::size_t>(r)].n_items));
    }
    return fit_glm(design, y, Family::Poisson);
}

GlmFit fit_disagreement_model(std::span<const ParticipantGroupRow> rows) {
    std::vector<ParticipantGroupRow> used;
    for (const auto& row : rows)
        if (row.comparisons > 0) used.push_back(row);
    if (used.empty()) throw InvalidInput("no participant-group rows with co-annotators");
    const DesignMatrix design = stereotype_design(used);
    const auto n = static_cast<Eigen::Index>(used.size());
    Eigen::VectorXd y(n);
    GlmOptions options;
    options.weights.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        y(r) = used[static_cast<std::size_t>(r)].disagreement;
        options.weights(r) = static_cast<double>(used[static_cast<std::size_t>(r)].comparisons);
    }
    return fit_glm(design, y, Family::Binomial, options);
}

}  // namespace stereobias
