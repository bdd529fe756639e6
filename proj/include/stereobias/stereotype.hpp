#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "stereobias/corpus.hpp"
#include "stereobias/error.hpp"

namespace stereobias {

/// Token -> vector table with a fixed dimension. Vectors are stored in
/// single precision, the precision distributed embeddings ship in.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(Eigen::Index dimension) : dimension_(dimension) {}

    /// Returns false (and keeps the first vector) if the token already exists.
    bool add(std::string token, const Eigen::Ref<const Eigen::VectorXf>& vector);

    Eigen::Index dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return tokens_.size(); }
    bool contains(std::string_view token) const { return index_.contains(std::string(token)); }
    std::optional<Eigen::VectorXd> find(std::string_view token) const;

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    auto vector(std::size_t i) const { return vectors_.col(static_cast<Eigen::Index>(i)); }

    /// Mean of the in-vocabulary vectors of `tokens`; nullopt if none are known.
    std::optional<Eigen::VectorXd> mean_vector(std::span<const std::string> tokens) const;

    /// One "token v1 ... vt" line per entry, 9 significant digits.
    void write(std::ostream& out) const;

private:
    Eigen::Index dimension_ = 0;
    std::vector<std::string> tokens_;
    Eigen::MatrixXf vectors_;  // dimension x size, grown geometrically
    std::unordered_map<std::string, std::size_t> index_;
};

struct EmbeddingLoadReport {
    std::size_t loaded = 0;
    std::size_t skipped = 0;       // wrong field count or unparsable numbers
    std::size_t duplicates = 0;    // later occurrences of a known token
    bool header_skipped = false;   // leading "count dimension" line
    std::vector<std::size_t> skipped_lines;
};

/// Whitespace-separated "token v1 ... vt" lines; t comes from the first
/// valid line. A leading "<count> <dimension>" line is ignored.
EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingLoadReport* report = nullptr);

struct Dictionary {
    std::string name;
    std::vector<std::string> words;

    /// Lowercases words; throws InvalidInput if empty. Duplicates are dropped.
    static Dictionary make(std::string name, std::vector<std::string> words);
};

/// One word per line; blank and '#' lines ignored.
Dictionary load_dictionary(const std::filesystem::path& path, std::string name);

/// u.v / (|u||v|), clamped to [-1, 1]. Throws on a zero-norm input or a
/// dimension mismatch.
template <typename DerivedU, typename DerivedV>
double cosine(const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedV>& v) {
    if (u.size() != v.size()) throw InvalidInput("cosine of vectors with different dimensions");
    const Eigen::VectorXd a = u.template cast<double>();
    const Eigen::VectorXd b = v.template cast<double>();
    const double norms = a.norm() * b.norm();
    if (!(norms > 0.0)) throw InvalidInput("cosine undefined for a zero vector");
    return std::clamp(a.dot(b) / norms, -1.0, 1.0);
}

struct DictionaryScore {
    double score = 0.0;
    double coverage = 0.0;  // dictionary words found / dictionary size
    std::size_t words_used = 0;
};

/// Mean cosine between the group representation (mean of its in-vocabulary
/// token vectors) and each in-vocabulary dictionary word.
DictionaryScore dictionary_score(std::span<const std::string> group_tokens, const Dictionary& dictionary,
                                 const EmbeddingTable& table);

struct StereotypeScore {
    std::string group_id;
    std::string surface_form;
    double warmth = 0.0;
    double competence = 0.0;
    double warmth_coverage = 0.0;
    double competence_coverage = 0.0;
};

struct GroupFailure {
    std::string group_id;
    std::string surface_form;
    std::string reason;
};

struct GroupScoring {
    std::vector<StereotypeScore> scores;
    std::vector<GroupFailure> failures;
};

/// Lexicographically first single-token form, else the first listed form.
const LexiconEntry& canonical_form(const SgtLexicon& lexicon, std::string_view group_id);

GroupScoring score_groups(const SgtLexicon& lexicon, const Dictionary& warmth, const Dictionary& competence,
                          const EmbeddingTable& table);

struct SurveyRow {
    std::string participant_id;
    std::string group_id;
    double friendliness = 0.0;
    double helpfulness = 0.0;
    double violence = 0.0;
    double intelligence = 0.0;
};

struct ExplicitComposite {
    std::string participant_id;
    std::string group_id;
    double warmth = 0.0;
    double competence = 0.0;
};

struct RejectedRow {
    std::size_t index = 0;  // position in the input rows
    std::string reason;
};

struct CompositeResult {
    std::vector<ExplicitComposite> composites;
    std::vector<RejectedRow> rejected;
};

inline constexpr double kScaleMin = 1.0;
inline constexpr double kScaleMax = 8.0;

/// warmth = mean(friendliness, helpfulness, 9 - violence) and
/// competence = intelligence. With reverse_violence = false the raw
/// violence rating is averaged instead.
CompositeResult explicit_composites(std::span<const SurveyRow> rows, bool reverse_violence = true);

/// CSV with header participant_id,group_id,friendliness,helpfulness,violence,intelligence.
std::vector<SurveyRow> load_survey(const std::filesystem::path& path);

}  // namespace stereobias
