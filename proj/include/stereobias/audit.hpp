#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "stereobias/corpus.hpp"
#include "stereobias/glm.hpp"
#include "stereobias/stereotype.hpp"

namespace stereobias {

/// Repeated random train/test partitions of items 0..n-1.
struct SplitPlan {
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    Eigen::Index n_items = 0;
    std::vector<std::vector<Eigen::Index>> train;  // sorted, per iteration
    std::vector<std::vector<Eigen::Index>> test;   // sorted, per iteration

    int iterations() const noexcept { return static_cast<int>(train.size()); }
};

/// Iteration i shuffles with Rng::stream(seed, i); the first
/// round(fraction * n) shuffled items train, the rest test.
SplitPlan make_splits(Eigen::Index n_items, double fraction, int iterations, std::uint64_t seed);

struct PredictionRecord {
    int iteration = 0;
    std::string item_id;
    int predicted = 0;
    int majority = 0;
};

/// iteration,item_id,predicted,majority with (iteration, item_id) unique.
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);

struct BaselineOptions {
    double ridge = 1.0;  // L2 penalty on the weight vector
};

/// Logistic regression on the mean embedding of a text's tokens.
struct BaselineModel {
    Eigen::VectorXd weights;
    double bias = 0.0;
    double ridge = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct TrainingExample {
    std::string text;
    int label = 0;
};

/// Mean of the in-vocabulary token vectors; the zero vector if none.
Eigen::VectorXd text_features(std::string_view text, const EmbeddingTable& embeddings);

/// Fits the baseline through fit_glm (binomial, ridge-penalized). Needs
/// at least one example of each class.
BaselineModel train_baseline(std::span<const TrainingExample> examples, const EmbeddingTable& embeddings,
                             const BaselineOptions& options = {});

/// Same fit on precomputed features (rows) and labels.
BaselineModel train_baseline(const Eigen::Ref<const Eigen::MatrixXd>& features,
                             const Eigen::Ref<const Eigen::VectorXi>& labels, const BaselineOptions& options = {});

/// 1 iff logistic(w.x + b) >= 0.5, i.e. w.x + b >= 0.
int predict_baseline(const BaselineModel& model, const Eigen::Ref<const Eigen::VectorXd>& features);
int predict_baseline(const BaselineModel& model, std::string_view text, const EmbeddingTable& embeddings);

/// Distinct mentioned groups per known item.
class MentionIndex {
public:
    MentionIndex() = default;
    MentionIndex(const PostTable& posts, const SgtLexicon& lexicon);

    void add_item(const std::string& item_id);
    void add_mention(const std::string& item_id, const std::string& group_id);

    bool knows(std::string_view item_id) const { return groups_.contains(std::string(item_id)); }
    /// Throws InvalidInput for an unknown item.
    const std::vector<std::string>& groups(std::string_view item_id) const;
    /// Groups in lexicon order (or first-mention order when built by hand).
    const std::vector<std::string>& group_order() const noexcept { return group_order_; }

private:
    std::unordered_map<std::string, std::vector<std::string>> groups_;
    std::vector<std::string> group_order_;
};

enum class RatioDenominator { ClassConditional, Total };

struct SgtErrorStats {
    std::string group_id;
    long long n_total = 0;
    long long n_neg = 0;
    long long n_pos = 0;
    long long n_fp = 0;
    long long n_fn = 0;
    double fp_ratio = 0.0;  // 0 when the denominator is empty
    double fn_ratio = 0.0;

    bool operator==(const SgtErrorStats&) const = default;
};

/// Every (iteration, item) prediction counts once for each distinct group
/// its item mentions. Items without mentions are ignored.
std::vector<SgtErrorStats> tally_errors(std::span<const PredictionRecord> predictions, const MentionIndex& mentions,
                                        RatioDenominator denominator = RatioDenominator::ClassConditional);

enum class ErrorKind { FalsePositive, FalseNegative };
enum class StereotypePredictor { Warmth, Competence };

std::string_view to_string(ErrorKind kind);
std::string_view to_string(StereotypePredictor predictor);

/// Poisson regression of the error count on one stereotype score with
/// offset log(n_total). Uses groups with n_total > 0 and a score; needs >= 3.
GlmFit associate_bias(std::span<const SgtErrorStats> stats, std::span<const StereotypeScore> scores, ErrorKind kind,
                      StereotypePredictor predictor);

struct AuditConfig {
    double train_fraction = 0.8;
    int iterations = 100;
    std::uint64_t seed = 0;
    bool include_ties = false;  // ties enter as label 0 when set
    int threads = 1;
    BaselineOptions baseline;
    RatioDenominator denominator = RatioDenominator::ClassConditional;
};

struct AuditData {
    std::vector<std::string> item_ids;  // audited items, annotation order
    Eigen::VectorXi majority;
    long long ties_excluded = 0;
};

/// Items present in both tables with their majority labels.
AuditData audit_items(const PostTable& posts, const AnnotationSet& annotations, bool include_ties);

struct AuditRun {
    AuditData data;
    SplitPlan plan;
    std::vector<PredictionRecord> predictions;  // iteration order, then test order
    std::vector<int> converged_iterations;
};

/// Splits, trains the baseline on each training set and predicts the test
/// set. Iterations may run on up to config.threads workers; results are
/// identical for any thread count.
AuditRun run_baseline_audit(const PostTable& posts, const AnnotationSet& annotations,
                            const EmbeddingTable& embeddings, const AuditConfig& config);

/// Same, with iterations executed in the given order (a permutation of
/// 0..iterations-1). Used to check order independence.
AuditRun run_baseline_audit(const PostTable& posts, const AnnotationSet& annotations,
                            const EmbeddingTable& embeddings, const AuditConfig& config,
                            std::span<const int> execution_order);

}  // namespace stereobias
