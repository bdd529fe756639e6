#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stereobias/error.hpp"

namespace stereobias {

/// Elementary symmetric functions stored as mantissas times 2^exponent.
/// The common binary exponent keeps long products representable; scaling by
/// powers of two is exact, so ratios between entries are unaffected.
template <typename Scalar>
struct ScaledEsf {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mantissa;
    int exponent = 0;

    Scalar value(Eigen::Index r) const { return std::ldexp(mantissa(r), exponent); }
    Scalar log_value(Eigen::Index r) const {
        return std::log(mantissa(r)) + static_cast<Scalar>(exponent) * std::numbers::ln2_v<Scalar>;
    }
};

/// gamma_r = sum over r-subsets of the product of `eps`, by the summation
/// recursion gamma_r <- gamma_r + eps_j * gamma_{r-1}. Rescales whenever the
/// running maximum leaves [2^-500, 2^500].
template <typename Derived>
ScaledEsf<typename Derived::Scalar> elementary_symmetric_scaled(const Eigen::MatrixBase<Derived>& eps) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index k = eps.size();
    ScaledEsf<Scalar> out;
    out.mantissa = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(k + 1);
    out.mantissa(0) = Scalar(1);
    for (Eigen::Index j = 0; j < k; ++j) {
        const Scalar e = eps(j);
        if (!(e > Scalar(0)) || !std::isfinite(e))
            throw InvalidInput("elementary symmetric functions need finite positive inputs");
        for (Eigen::Index r = j + 1; r >= 1; --r) out.mantissa(r) += e * out.mantissa(r - 1);
        const Scalar peak = out.mantissa.head(j + 2).maxCoeff();
        int shift = 0;
        std::frexp(peak, &shift);
        if (shift > 500 || shift < -500) {
            out.mantissa = out.mantissa.unaryExpr([shift](Scalar v) { return std::ldexp(v, -shift); });
            out.exponent += shift;
        }
    }
    return out;
}

/// Plain gamma_0..gamma_k. gamma_0 is exactly 1.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> elementary_symmetric(const Eigen::MatrixBase<Derived>& eps) {
    if (eps.size() < 1) throw InvalidInput("elementary symmetric functions need at least one input");
    const auto scaled = elementary_symmetric_scaled(eps);
    if (scaled.exponent == 0) return scaled.mantissa;
    return scaled.mantissa.unaryExpr([e = scaled.exponent](auto v) { return std::ldexp(v, e); });
}

/// Persons x items dichotomous responses. Entries are 0, 1 or kMissing.
struct ResponseMatrix {
    static constexpr int kMissing = -1;

    std::vector<std::string> person_ids;
    std::vector<std::string> item_ids;
    Eigen::MatrixXi values;

    Eigen::Index persons() const noexcept { return values.rows(); }
    Eigen::Index items() const noexcept { return values.cols(); }
    bool complete() const { return (values.array() != kMissing).all(); }
};

/// Wide CSV: person_id then one column per item; empty or NA cells are missing.
ResponseMatrix load_response_matrix(const std::filesystem::path& path);

/// Drops persons and items with no observed response.
ResponseMatrix drop_empty(const ResponseMatrix& matrix);

struct RaschFit {
    std::vector<std::string> item_ids;
    Eigen::VectorXd difficulties;  // sum-zero
    Eigen::VectorXd standard_errors;
    double log_conditional_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    double max_abs_gradient = 0.0;
    long long informative_persons = 0;
    std::vector<Eigen::Index> excluded_persons;  // zero or perfect raw score
};

struct RaschOptions {
    double gradient_tolerance = 1e-8;
    int max_iterations = 500;
};

/// Item difficulties by conditional maximum likelihood with Newton steps.
/// Persons are grouped by which items they answered and each group is
/// conditioned on its own raw-score distribution, so incomplete designs are
/// handled; a complete matrix is the single-group case. Starting values may
/// be supplied; they are re-centred.
RaschFit fit_rasch_cml(const ResponseMatrix& matrix, const RaschOptions& options = {},
                       const Eigen::VectorXd* start = nullptr);

struct PersonTendency {
    std::string person_id;
    long long raw_score = 0;
    long long answered = 0;
    double theta = 0.0;
    double standard_error = 0.0;
    bool extremal = false;
    bool estimable = true;  // false when the person answered no item
};

/// Solves r' = sum_j logistic(theta - delta_j) over the answered items, with
/// r' = min(max(r, 0.5), k - 0.5). Bisection on [-30, 30], then Newton.
double solve_tendency(const Eigen::Ref<const Eigen::VectorXd>& difficulties, double target_score);

std::vector<PersonTendency> estimate_tendencies(const ResponseMatrix& matrix,
                                                const Eigen::Ref<const Eigen::VectorXd>& difficulties);

/// Cronbach's alpha over the columns of a persons x traits table, using
/// n-1 variances.
template <typename Derived>
double cronbach_alpha(const Eigen::MatrixBase<Derived>& scores) {
    const Eigen::Index n = scores.rows();
    const Eigen::Index k = scores.cols();
    if (k < 2) throw InvalidInput("alpha needs at least two items");
    if (n < 2) throw InvalidInput("alpha needs at least two respondents");
    const Eigen::MatrixXd x = scores.template cast<double>();
    if (!x.allFinite()) throw InvalidInput("alpha input has missing or non-finite entries");
    auto variance = [n](const Eigen::VectorXd& v) {
        return (v.array() - v.mean()).square().sum() / static_cast<double>(n - 1);
    };
    double item_variance = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) item_variance += variance(x.col(j));
    const double total_variance = variance(x.rowwise().sum());
    if (!(total_variance > 0.0)) throw Undefined("alpha undefined: total score variance is zero");
    const double kk = static_cast<double>(k);
    return kk / (kk - 1.0) * (1.0 - item_variance / total_variance);
}

}  // namespace stereobias
