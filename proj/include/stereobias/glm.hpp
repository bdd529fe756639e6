#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace stereobias {

enum class Family { Poisson, Binomial, Gaussian };

/// "poisson-log", "binomial-logit", "gaussian-identity".
std::string_view family_name(Family family);
/// Accepts the long names above or poisson / binomial / logistic / gaussian / linear.
Family parse_family(std::string_view name);

inline constexpr std::string_view kInterceptName = "(Intercept)";

/// n x p predictors with named columns and an optional offset.
struct DesignMatrix {
    Eigen::MatrixXd x;
    std::vector<std::string> names;
    Eigen::VectorXd offset;  // empty means no offset

    Eigen::Index rows() const noexcept { return x.rows(); }
    Eigen::Index cols() const noexcept { return x.cols(); }

    static DesignMatrix intercept_only(Eigen::Index n);
    DesignMatrix& add_column(std::string name, const Eigen::Ref<const Eigen::VectorXd>& values);
    DesignMatrix& add_columns(const Eigen::Ref<const Eigen::MatrixXd>& values, const std::vector<std::string>& names);
};

struct GlmOptions {
    int max_iterations = 100;
    double deviance_tolerance = 1e-10;  // on |dev - dev_old| / (|dev| + 0.1)
    double score_tolerance = 1e-8;      // relative to max(1, |X' w y|)
    double separation_bound = 30.0;     // |beta| beyond this flags separation
    double ridge = 0.0;                 // L2 penalty on non-intercept coefficients
    Eigen::VectorXd weights;            // prior weights; empty means all ones
};

struct GlmFit {
    Family family = Family::Gaussian;
    std::vector<std::string> names;
    Eigen::VectorXd beta;
    Eigen::VectorXd standard_errors;
    Eigen::VectorXd z_values;
    Eigen::VectorXd p_values;  // two-sided Wald
    Eigen::VectorXd fitted;    // mu-hat
    double deviance = 0.0;
    double log_likelihood = 0.0;
    double dispersion = 1.0;
    double score_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string diagnostic;
    std::vector<double> deviance_trace;
    Eigen::Index observations = 0;

    /// Index of a named coefficient; throws InvalidInput if absent.
    Eigen::Index index_of(std::string_view name) const;
};

/// Iteratively reweighted least squares with canonical links. Deviance is
/// kept non-increasing by step halving. Throws InvalidInput naming the
/// collinear columns when the design is rank deficient (unless ridge > 0).
GlmFit fit_glm(const DesignMatrix& design, const Eigen::Ref<const Eigen::VectorXd>& y, Family family,
               const GlmOptions& options = {});

/// Percent change in the mean (or odds) per unit increase: 100 (e^beta - 1).
double rate_ratio(double beta);

struct DummyColumns {
    Eigen::MatrixXd columns;
    std::vector<std::string> names;
    std::vector<std::string> levels;  // first-appearance order; levels[0] is the reference
};

/// k-1 indicator columns with the first level as reference.
DummyColumns cluster_dummies(std::span<const std::string> ids, std::string_view prefix = {});

enum class PermutationStatistic { MeanDifference, MedianDifference };

struct PermutationResult {
    double p_value = 1.0;
    double observed = 0.0;  // statistic(a) - statistic(b)
    long long arrangements = 0;
    bool exhaustive = false;
};

/// Two-sided two-sample permutation test. Enumerates every split when the
/// number of distinct splits is at most `permutations`, giving
/// p = #{|T| >= |T_obs|} / #splits; otherwise samples `permutations` splits
/// with p = (1 + #{|T| >= |T_obs|}) / (1 + permutations). Split i draws
/// from Rng::stream(seed, i), and the pooled sample is put in a canonical
/// order first, so p does not depend on which sample is passed as `a`.
PermutationResult permutation_test(std::span<const double> a, std::span<const double> b,
                                   PermutationStatistic statistic, long long permutations, std::uint64_t seed);

struct AnovaRow {
    std::string source;
    double sum_of_squares = 0.0;
    double df = 0.0;
    double f = 0.0;
    double p = 0.0;
};

/// Type-I (sequential) two-way ANOVA for two binary factors, entered in
/// the order A, B, A x B. Rows: A, B, A:B, Residuals.
std::vector<AnovaRow> two_way_anova(std::span<const double> y, std::span<const int> factor_a,
                                    std::span<const int> factor_b);

}  // namespace stereobias
