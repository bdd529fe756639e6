#include "stereobias/stereotype.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <unordered_set>

#include "stereobias/io.hpp"

namespace stereobias {

namespace {

std::vector<std::string_view> split_whitespace(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
        if (pos >= line.size()) break;
        const std::size_t start = pos;
        while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
        fields.push_back(line.substr(start, pos - start));
    }
    return fields;
}

bool parse_float(std::string_view text, float& out) {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

std::string lowercase(std::string_view text) {
    std::string out(text);
    for (auto& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

}  // namespace

bool EmbeddingTable::add(std::string token, const Eigen::Ref<const Eigen::VectorXf>& vector) {
    if (dimension_ == 0) dimension_ = vector.size();
    if (vector.size() != dimension_) throw InvalidInput("embedding for '" + token + "' has the wrong dimension");
    if (index_.contains(token)) return false;
    const auto slot = static_cast<Eigen::Index>(tokens_.size());
    if (slot >= vectors_.cols()) vectors_.conservativeResize(dimension_, std::max<Eigen::Index>(16, 2 * vectors_.cols()));
    vectors_.col(slot) = vector;
    index_.emplace(token, tokens_.size());
    tokens_.push_back(std::move(token));
    return true;
}

std::optional<Eigen::VectorXd> EmbeddingTable::find(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return vectors_.col(static_cast<Eigen::Index>(it->second)).cast<double>();
}

std::optional<Eigen::VectorXd> EmbeddingTable::mean_vector(std::span<const std::string> tokens) const {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dimension_);
    std::size_t found = 0;
    for (const auto& token : tokens) {
        const auto it = index_.find(token);
        if (it == index_.end()) continue;
        sum += vectors_.col(static_cast<Eigen::Index>(it->second)).cast<double>();
        ++found;
    }
    if (found == 0) return std::nullopt;
    return sum / static_cast<double>(found);
}

void EmbeddingTable::write(std::ostream& out) const {
    char buffer[32];
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        out << tokens_[i];
        for (Eigen::Index d = 0; d < dimension_; ++d) {
            std::snprintf(buffer, sizeof buffer, "%.9g", static_cast<double>(vectors_(d, static_cast<Eigen::Index>(i))));
            out << ' ' << buffer;
        }
        out << '\n';
    }
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingLoadReport* report) {
    const std::string origin = path.string();
    const auto lines = io::read_lines(path);
    EmbeddingLoadReport local;
    EmbeddingLoadReport& tally = report != nullptr ? *report : local;
    tally = EmbeddingLoadReport{};

    EmbeddingTable table;
    Eigen::VectorXf values;
    bool seen_content = false;
    bool any_nonzero = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto fields = split_whitespace(lines[i]);
        if (fields.empty()) continue;
        if (!seen_content) {
            seen_content = true;
            if (fields.size() == 2 && io::parse_int(fields[0]) && io::parse_int(fields[1])) {
                tally.header_skipped = true;
                continue;
            }
        }
        const auto width = static_cast<Eigen::Index>(fields.size()) - 1;
        if (width < 1 || (table.dimension() != 0 && width != table.dimension())) {
            ++tally.skipped;
            tally.skipped_lines.push_back(i + 1);
            continue;
        }
        values.resize(width);
        bool ok = true;
        for (Eigen::Index d = 0; d < width && ok; ++d) ok = parse_float(fields[static_cast<std::size_t>(d + 1)], values(d));
        if (!ok) {
            ++tally.skipped;
            tally.skipped_lines.push_back(i + 1);
            continue;
        }
        if (table.add(std::string(fields[0]), values)) {
            ++tally.loaded;
            any_nonzero = any_nonzero || values.squaredNorm() > 0.0f;
        } else {
            ++tally.duplicates;
        }
    }
    if (tally.loaded == 0) throw ParseError(origin, 0, "no valid embedding lines");
    if (!any_nonzero) throw ParseError(origin, 0, "every embedding vector is zero");
    return table;
}

Dictionary Dictionary::make(std::string name, std::vector<std::string> words) {
    Dictionary dict;
    dict.name = std::move(name);
    std::unordered_set<std::string> seen;
    for (auto& word : words) {
        std::string w = lowercase(io::trim(word));
        if (w.empty()) continue;
        if (seen.insert(w).second) dict.words.push_back(std::move(w));
    }
    if (dict.words.empty()) throw InvalidInput("dictionary '" + dict.name + "' is empty");
    return dict;
}

Dictionary load_dictionary(const std::filesystem::path& path, std::string name) {
    std::vector<std::string> words;
    for (const auto& line : io::read_lines(path)) {
        const auto content = io::trim(line);
        if (content.empty() || content.front() == '#') continue;
        words.emplace_back(content);
    }
    try {
        return Dictionary::make(std::move(name), std::move(words));
    } catch (const InvalidInput& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

DictionaryScore dictionary_score(std::span<const std::string> group_tokens, const Dictionary& dictionary,
                                 const EmbeddingTable& table) {
    const auto group = table.mean_vector(group_tokens);
    if (!group) throw InvalidInput("every group token is out of vocabulary");
    if (!(group->squaredNorm() > 0.0)) throw InvalidInput("group vector has zero norm");
    if (dictionary.words.empty()) throw InvalidInput("dictionary '" + dictionary.name + "' is empty");

    double total = 0.0;
    std::size_t used = 0;
    for (const auto& word : dictionary.words) {
        const auto vec = table.find(word);
        if (!vec || !(vec->squaredNorm() > 0.0)) continue;
        total += cosine(*group, *vec);
        ++used;
    }
    if (used == 0) throw InvalidInput("no word of dictionary '" + dictionary.name + "' is in the vocabulary");
    return {total / static_cast<double>(used),
            static_cast<double>(used) / static_cast<double>(dictionary.words.size()), used};
}

const LexiconEntry& canonical_form(const SgtLexicon& lexicon, std::string_view group_id) {
    const auto forms = lexicon.forms(group_id);
    if (forms.empty()) throw InvalidInput("unknown group '" + std::string(group_id) + "'");
    const LexiconEntry* best = nullptr;
    for (const auto* entry : forms)
        if (entry->tokens.size() == 1 && (best == nullptr || entry->surface_form < best->surface_form)) best = entry;
    return best != nullptr ? *best : *forms.front();
}

GroupScoring score_groups(const SgtLexicon& lexicon, const Dictionary& warmth, const Dictionary& competence,
                          const EmbeddingTable& table) {
    GroupScoring out;
    for (const auto& group : lexicon.groups()) {
        const LexiconEntry& form = canonical_form(lexicon, group);
        try {
            const auto w = dictionary_score(form.tokens, warmth, table);
            const auto c = dictionary_score(form.tokens, competence, table);
            out.scores.push_back({group, form.surface_form, w.score, c.score, w.coverage, c.coverage});
        } catch (const InvalidInput& e) {
            out.failures.push_back({group, form.surface_form, e.what()});
        }
    }
    return out;
}

CompositeResult explicit_composites(std::span<const SurveyRow> rows, bool reverse_violence) {
    CompositeResult out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const std::array<std::pair<const char*, double>, 4> traits{{{"friendliness", row.friendliness},
                                                                    {"helpfulness", row.helpfulness},
                                                                    {"violence", row.violence},
                                                                    {"intelligence", row.intelligence}}};
        std::string problem;
        for (const auto& [name, value] : traits) {
            if (!(value >= kScaleMin && value <= kScaleMax)) {
                problem = std::string(name) + " outside [1, 8]";
                break;
            }
        }
        if (!problem.empty()) {
            out.rejected.push_back({i, problem});
            continue;
        }
        const double violence = reverse_violence ? (kScaleMin + kScaleMax) - row.violence : row.violence;
        out.composites.push_back({row.participant_id, row.group_id,
                                  (row.friendliness + row.helpfulness + violence) / 3.0, row.intelligence});
    }
    return out;
}

std::vector<SurveyRow> load_survey(const std::filesystem::path& path) {
    const std::string origin = path.string();
    const auto rows = io::read_csv(path);
    if (rows.empty()) throw ParseError(origin, 0, "missing header row");
    constexpr std::array<std::string_view, 6> names{"participant_id", "group_id",  "friendliness",
                                                    "helpfulness",    "violence", "intelligence"};
    const auto& header = rows.front().fields;
    std::array<std::size_t, 6> column{};
    for (std::size_t k = 0; k < names.size(); ++k) {
        const auto it = std::find_if(header.begin(), header.end(),
                                     [&](const std::string& h) { return io::trim(h) == names[k]; });
        if (it == header.end())
            throw ParseError(origin, rows.front().line, "header lacks column '" + std::string(names[k]) + "'");
        column[k] = static_cast<std::size_t>(it - header.begin());
    }
    std::vector<SurveyRow> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.size())
            throw ParseError(origin, row.line, "expected " + std::to_string(header.size()) + " fields");
        SurveyRow survey;
        survey.participant_id = std::string(io::trim(row.fields[column[0]]));
        survey.group_id = std::string(io::trim(row.fields[column[1]]));
        double* targets[4] = {&survey.friendliness, &survey.helpfulness, &survey.violence, &survey.intelligence};
        for (std::size_t k = 0; k < 4; ++k) {
            const auto value = io::parse_double(row.fields[column[k + 2]]);
            if (!value) throw ParseError(origin, row.line, "non-numeric " + std::string(names[k + 2]));
            *targets[k] = *value;
        }
        out.push_back(std::move(survey));
    }
    return out;
}

}  // namespace stereobias
