#include "stereobias/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "stereobias/error.hpp"
#include "stereobias/random.hpp"
#include "stereobias/stats.hpp"

namespace stereobias {

namespace {

constexpr double kProbabilityFloor = 1e-15;

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double y_log_ratio(double y, double mu) { return y > 0.0 ? y * std::log(y / mu) : 0.0; }

struct Link {
    Family family;

    double mean(double eta) const {
        switch (family) {
            case Family::Poisson: return std::exp(eta);
            case Family::Binomial: return std::clamp(logistic(eta), kProbabilityFloor, 1.0 - kProbabilityFloor);
            case Family::Gaussian: return eta;
        }
        return eta;
    }
    double derivative(double mu) const {  // d mu / d eta
        switch (family) {
            case Family::Poisson: return mu;
            case Family::Binomial: return mu * (1.0 - mu);
            case Family::Gaussian: return 1.0;
        }
        return 1.0;
    }
    double variance(double mu) const {
        switch (family) {
            case Family::Poisson: return mu;
            case Family::Binomial: return mu * (1.0 - mu);
            case Family::Gaussian: return 1.0;
        }
        return 1.0;
    }
    double link(double mu) const {
        switch (family) {
            case Family::Poisson: return std::log(mu);
            case Family::Binomial: return std::log(mu / (1.0 - mu));
            case Family::Gaussian: return mu;
        }
        return mu;
    }
    double unit_deviance(double y, double mu) const {
        switch (family) {
            case Family::Poisson: return 2.0 * (y_log_ratio(y, mu) - (y - mu));
            case Family::Binomial: return 2.0 * (y_log_ratio(y, mu) + y_log_ratio(1.0 - y, 1.0 - mu));
            case Family::Gaussian: return (y - mu) * (y - mu);
        }
        return 0.0;
    }
};

std::vector<std::string> collinear_columns(const DesignMatrix& design) {
    std::vector<std::string> names;
    const Eigen::HouseholderQR<Eigen::MatrixXd> sequential(design.x);
    const Eigen::MatrixXd r = sequential.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < design.cols(); ++j) {
        const double norm = design.x.col(j).norm();
        if (norm == 0.0 || std::abs(r(j, j)) <= 1e-10 * norm) names.push_back(design.names[static_cast<std::size_t>(j)]);
    }
    if (!names.empty()) return names;
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pivoted(design.x);
    if (pivoted.rank() < design.cols()) {
        const auto& perm = pivoted.colsPermutation().indices();
        for (Eigen::Index j = pivoted.rank(); j < design.cols(); ++j)
            names.push_back(design.names[static_cast<std::size_t>(perm(j))]);
    }
    return names;
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& part : parts) {
        if (!out.empty()) out += ", ";
        out += part;
    }
    return out;
}

void validate_response(const Eigen::Ref<const Eigen::VectorXd>& y, Family family) {
    if (!y.allFinite()) throw InvalidInput("response has non-finite values");
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (family == Family::Poisson && y(i) < 0.0) throw InvalidInput("Poisson response must be non-negative");
        if (family == Family::Binomial && (y(i) < 0.0 || y(i) > 1.0))
            throw InvalidInput("binomial response must lie in [0, 1]");
    }
}

}  // namespace

std::string_view family_name(Family family) {
    switch (family) {
        case Family::Poisson: return "poisson-log";
        case Family::Binomial: return "binomial-logit";
        case Family::Gaussian: return "gaussian-identity";
    }
    return "unknown";
}

Family parse_family(std::string_view name) {
    if (name == "poisson" || name == "poisson-log") return Family::Poisson;
    if (name == "binomial" || name == "logistic" || name == "binomial-logit") return Family::Binomial;
    if (name == "gaussian" || name == "linear" || name == "gaussian-identity") return Family::Gaussian;
    throw InvalidInput("unknown family '" + std::string(name) + "'");
}

DesignMatrix DesignMatrix::intercept_only(Eigen::Index n) {
    DesignMatrix design;
    design.x = Eigen::MatrixXd::Ones(n, 1);
    design.names = {std::string(kInterceptName)};
    return design;
}

DesignMatrix& DesignMatrix::add_column(std::string name, const Eigen::Ref<const Eigen::VectorXd>& values) {
    if (x.cols() > 0 && values.size() != x.rows()) throw InvalidInput("column '" + name + "' has the wrong length");
    const Eigen::Index n = values.size();
    Eigen::MatrixXd grown(n, x.cols() + 1);
    if (x.cols() > 0) grown.leftCols(x.cols()) = x;
    grown.col(x.cols()) = values;
    x = std::move(grown);
    names.push_back(std::move(name));
    return *this;
}

DesignMatrix& DesignMatrix::add_columns(const Eigen::Ref<const Eigen::MatrixXd>& values,
                                        const std::vector<std::string>& column_names) {
    if (static_cast<Eigen::Index>(column_names.size()) != values.cols())
        throw InvalidInput("column name count does not match the block");
    for (Eigen::Index j = 0; j < values.cols(); ++j) add_column(column_names[static_cast<std::size_t>(j)], values.col(j));
    return *this;
}

Eigen::Index GlmFit::index_of(std::string_view name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InvalidInput("no coefficient named '" + std::string(name) + "'");
    return static_cast<Eigen::Index>(it - names.begin());
}

GlmFit fit_glm(const DesignMatrix& design, const Eigen::Ref<const Eigen::VectorXd>& y, Family family,
               const GlmOptions& options) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    if (p < 1) throw InvalidInput("design matrix has no columns");
    if (static_cast<Eigen::Index>(design.names.size()) != p) throw InvalidInput("design column names do not match");
    if (y.size() != n) throw InvalidInput("response length does not match the design");
    if (n <= p) throw InvalidInput("need more observations than coefficients");
    if (!design.x.allFinite()) throw InvalidInput("design matrix has non-finite entries");
    if (design.offset.size() != 0 && design.offset.size() != n) throw InvalidInput("offset length does not match");
    if (design.offset.size() != 0 && !design.offset.allFinite()) throw InvalidInput("offset has non-finite entries");
    validate_response(y, family);
    const Eigen::VectorXd weights = options.weights.size() == 0 ? Eigen::VectorXd::Ones(n) : options.weights;
    if (weights.size() != n) throw InvalidInput("weight vector length does not match");
    if (!weights.allFinite() || (weights.array() < 0.0).any()) throw InvalidInput("weights must be finite and >= 0");
    if (options.ridge < 0.0) throw InvalidInput("ridge penalty must be non-negative");

    if (options.ridge == 0.0) {
        const auto collinear = collinear_columns(design);
        if (!collinear.empty()) throw InvalidInput("rank-deficient design; collinear columns: " + join(collinear));
    }

    const Link link{family};
    const Eigen::VectorXd offset = design.offset.size() == 0 ? Eigen::VectorXd::Zero(n) : design.offset;
    Eigen::VectorXd penalty = Eigen::VectorXd::Zero(p);
    for (Eigen::Index j = 0; j < p; ++j)
        if (design.names[static_cast<std::size_t>(j)] != kInterceptName) penalty(j) = options.ridge;

    auto objective = [&](const Eigen::VectorXd& mu, const Eigen::VectorXd& beta) {
        double dev = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) dev += weights(i) * link.unit_deviance(y(i), mu(i));
        return dev + (penalty.array() * beta.array().square()).sum();
    };
    auto means = [&](const Eigen::VectorXd& beta) {
        const Eigen::VectorXd eta = design.x * beta + offset;
        return eta.unaryExpr([&](double e) { return link.mean(e); }).eval();
    };

    Eigen::VectorXd mu(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        switch (family) {
            case Family::Poisson: mu(i) = y(i) + 0.1; break;
            case Family::Binomial: mu(i) = (weights(i) * y(i) + 0.5) / (weights(i) + 1.0); break;
            case Family::Gaussian: mu(i) = y(i); break;
        }
    }
    Eigen::VectorXd eta = mu.unaryExpr([&](double m) { return link.link(m); });

    GlmFit fit;
    fit.family = family;
    fit.names = design.names;
    fit.observations = n;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    double dev_old = std::numeric_limits<double>::infinity();
    const double score_scale = std::max(1.0, (design.x.transpose() * weights.cwiseProduct(y)).norm());

    auto score = [&](const Eigen::VectorXd& m, const Eigen::VectorXd& b) {
        Eigen::VectorXd u(n);
        for (Eigen::Index i = 0; i < n; ++i)
            u(i) = weights(i) * (y(i) - m(i)) * link.derivative(m(i)) / link.variance(m(i));
        return (design.x.transpose() * u - penalty.cwiseProduct(b)).eval();
    };

    Eigen::MatrixXd augmented(n + p, p);
    Eigen::VectorXd rhs(n + p);
    while (fit.iterations < options.max_iterations) {
        // Weighted least-squares step, with the ridge as extra pseudo-rows.
        augmented.setZero();
        rhs.setZero();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = link.derivative(mu(i));
            const double w = weights(i) * d * d / link.variance(mu(i));
            const double sw = std::sqrt(w);
            const double z = (eta(i) - offset(i)) + (y(i) - mu(i)) / d;
            augmented.row(i) = sw * design.x.row(i);
            rhs(i) = sw * z;
        }
        for (Eigen::Index j = 0; j < p; ++j) augmented(n + j, j) = std::sqrt(penalty(j));
        Eigen::VectorXd proposal = augmented.colPivHouseholderQr().solve(rhs);

        Eigen::VectorXd proposal_mu = means(proposal);
        double dev = objective(proposal_mu, proposal);
        const bool have_previous = std::isfinite(dev_old);
        int halvings = 0;
        while (have_previous && (!std::isfinite(dev) || dev > dev_old * (1.0 + 1e-12) + 1e-12) && halvings < 40) {
            proposal = 0.5 * (proposal + beta);
            proposal_mu = means(proposal);
            dev = objective(proposal_mu, proposal);
            ++halvings;
        }
        if (!std::isfinite(dev)) {
            fit.diagnostic = "deviance became non-finite";
            break;
        }
        beta = proposal;
        mu = proposal_mu;
        eta = design.x * beta + offset;
        ++fit.iterations;
        fit.deviance_trace.push_back(dev);

        if (family != Family::Gaussian && beta.cwiseAbs().maxCoeff() > options.separation_bound) {
            Eigen::Index worst = 0;
            beta.cwiseAbs().maxCoeff(&worst);
            fit.diagnostic = "possible separation: |beta| for '" + design.names[static_cast<std::size_t>(worst)] +
                             "' exceeded " + std::to_string(options.separation_bound);
            break;
        }
        const double change = std::abs(dev - dev_old) / (std::abs(dev) + 0.1);
        dev_old = dev;
        fit.score_norm = score(mu, beta).norm();
        if (change < options.deviance_tolerance && fit.score_norm <= options.score_tolerance * score_scale) {
            fit.converged = true;
            break;
        }
    }
    if (fit.converged && family == Family::Binomial && options.ridge == 0.0 &&
        (mu.array() < 1e-10 || mu.array() > 1.0 - 1e-10).any()) {
        fit.converged = false;
        fit.diagnostic = "possible separation: fitted probabilities numerically 0 or 1";
    }
    if (!fit.converged && fit.diagnostic.empty())
        fit.diagnostic = "iteration limit reached (" + std::to_string(options.max_iterations) + ")";

    fit.beta = beta;
    fit.fitted = mu;
    fit.score_norm = score(mu, beta).norm();
    fit.deviance = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) fit.deviance += weights(i) * link.unit_deviance(y(i), mu(i));

    const double effective_n = weights.sum();
    switch (family) {
        case Family::Poisson:
            fit.log_likelihood = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                fit.log_likelihood += weights(i) * (y(i) * std::log(mu(i)) - mu(i) - std::lgamma(y(i) + 1.0));
            break;
        case Family::Binomial:
            fit.log_likelihood = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double m = weights(i);
                const double successes = m * y(i);
                fit.log_likelihood += std::lgamma(m + 1.0) - std::lgamma(successes + 1.0) -
                                      std::lgamma(m - successes + 1.0) + successes * std::log(mu(i)) +
                                      (m - successes) * std::log1p(-mu(i));
            }
            break;
        case Family::Gaussian:
            fit.dispersion = fit.deviance / static_cast<double>(n - p);
            fit.log_likelihood =
                -0.5 * effective_n * (std::log(2.0 * std::numbers::pi * fit.deviance / effective_n) + 1.0);
            break;
    }

    Eigen::MatrixXd information = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = link.derivative(mu(i));
        const double w = weights(i) * d * d / link.variance(mu(i));
        information.noalias() += w * design.x.row(i).transpose() * design.x.row(i);
    }
    information.diagonal() += penalty;
    const Eigen::MatrixXd covariance =
        information.ldlt().solve(Eigen::MatrixXd::Identity(p, p)) * fit.dispersion;
    fit.standard_errors = covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    fit.z_values = fit.beta.cwiseQuotient(fit.standard_errors);
    fit.p_values = fit.z_values.unaryExpr([](double z) { return stats::two_sided_normal_p(z); });
    return fit;
}

double rate_ratio(double beta) {
    if (!std::isfinite(beta)) throw InvalidInput("coefficient must be finite");
    return 100.0 * std::expm1(beta);
}

DummyColumns cluster_dummies(std::span<const std::string> ids, std::string_view prefix) {
    DummyColumns out;
    std::unordered_map<std::string, Eigen::Index> level_index;
    for (const auto& id : ids) {
        if (level_index.try_emplace(id, static_cast<Eigen::Index>(out.levels.size())).second) out.levels.push_back(id);
    }
    if (out.levels.size() < 2) throw InvalidInput("cluster dummies need at least two levels");
    const auto n = static_cast<Eigen::Index>(ids.size());
    const auto k = static_cast<Eigen::Index>(out.levels.size());
    out.columns = Eigen::MatrixXd::Zero(n, k - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index level = level_index.at(ids[static_cast<std::size_t>(i)]);
        if (level > 0) out.columns(i, level - 1) = 1.0;
    }
    for (Eigen::Index j = 1; j < k; ++j)
        out.names.push_back(std::string(prefix) + "[" + out.levels[static_cast<std::size_t>(j)] + "]");
    return out;
}

namespace {

class SplitStatistic {
public:
    SplitStatistic(const std::vector<double>& pooled, PermutationStatistic kind) : pooled_(pooled), kind_(kind) {
        total_ = 0.0;
        for (double v : pooled_) total_ += v;
    }

    // statistic(first group) - statistic(rest), where membership marks the first group.
    double operator()(const std::vector<std::size_t>& first) {
        const std::size_t n = pooled_.size();
        const std::size_t m = first.size();
        if (kind_ == PermutationStatistic::MeanDifference) {
            double sum = 0.0;
            for (auto i : first) sum += pooled_[i];
            return sum / static_cast<double>(m) - (total_ - sum) / static_cast<double>(n - m);
        }
        in_first_.assign(n, 0);
        for (auto i : first) in_first_[i] = 1;
        group_a_.clear();
        group_b_.clear();
        for (std::size_t i = 0; i < n; ++i) (in_first_[i] ? group_a_ : group_b_).push_back(pooled_[i]);
        return median(group_a_) - median(group_b_);
    }

private:
    static double median(std::vector<double>& values) {
        const std::size_t mid = values.size() / 2;
        std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
        const double upper = values[mid];
        if (values.size() % 2 == 1) return upper;
        const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
        return 0.5 * (lower + upper);
    }

    const std::vector<double>& pooled_;
    PermutationStatistic kind_;
    double total_ = 0.0;
    std::vector<char> in_first_;
    std::vector<double> group_a_;
    std::vector<double> group_b_;
};

// C(n, k), or limit + 1 once it exceeds limit.
long long capped_binomial(long long n, long long k, long long limit) {
    k = std::min(k, n - k);
    __extension__ __int128 value = 1;
    for (long long i = 1; i <= k; ++i) {
        value = value * (n - k + i) / i;
        if (value > limit) return limit + 1;
    }
    return static_cast<long long>(value);
}

}  // namespace

PermutationResult permutation_test(std::span<const double> a, std::span<const double> b,
                                   PermutationStatistic statistic, long long permutations, std::uint64_t seed) {
    if (a.empty() || b.empty()) throw InvalidInput("permutation test needs two non-empty samples");
    if (permutations < 1) throw InvalidInput("permutation count must be at least 1");
    for (double v : a)
        if (!std::isfinite(v)) throw InvalidInput("permutation test sample has non-finite values");
    for (double v : b)
        if (!std::isfinite(v)) throw InvalidInput("permutation test sample has non-finite values");

    // Canonical orientation: the smaller sample (or the lexicographically
    // smaller sorted sample on equal sizes) is the "first" group.
    std::vector<double> first(a.begin(), a.end());
    std::vector<double> second(b.begin(), b.end());
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    const bool swapped = first.size() > second.size() || (first.size() == second.size() && second < first);
    if (swapped) std::swap(first, second);

    std::vector<double> pooled = first;
    pooled.insert(pooled.end(), second.begin(), second.end());
    const std::size_t n = pooled.size();
    const std::size_t m = first.size();

    SplitStatistic stat(pooled, statistic);
    std::vector<std::size_t> members(m);
    for (std::size_t i = 0; i < m; ++i) members[i] = i;
    const double observed = stat(members);
    const double threshold = std::abs(observed) - 1e-9 * std::max(1.0, std::abs(observed));

    PermutationResult result;
    result.observed = swapped ? -observed : observed;
    const long long splits = capped_binomial(static_cast<long long>(n), static_cast<long long>(m), permutations);

    long long extreme = 0;
    if (splits <= permutations) {
        result.exhaustive = true;
        result.arrangements = splits;
        // Lexicographic walk over all m-subsets of {0..n-1}.
        while (true) {
            if (std::abs(stat(members)) >= threshold) ++extreme;
            std::size_t i = m;
            while (i > 0 && members[i - 1] == n - m + i - 1) --i;
            if (i == 0) break;
            ++members[i - 1];
            for (std::size_t j = i; j < m; ++j) members[j] = members[j - 1] + 1;
        }
        result.p_value = static_cast<double>(extreme) / static_cast<double>(splits);
        return result;
    }

    result.arrangements = permutations;
    std::vector<std::size_t> order(n);
    for (long long k = 0; k < permutations; ++k) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k));
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = 0; i < m; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(n - i));
            std::swap(order[i], order[j]);
        }
        members.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
        if (std::abs(stat(members)) >= threshold) ++extreme;
    }
    result.p_value = static_cast<double>(1 + extreme) / static_cast<double>(1 + permutations);
    return result;
}

std::vector<AnovaRow> two_way_anova(std::span<const double> y, std::span<const int> factor_a,
                                    std::span<const int> factor_b) {
    const auto n = static_cast<Eigen::Index>(y.size());
    if (factor_a.size() != y.size() || factor_b.size() != y.size())
        throw InvalidInput("ANOVA factors must match the response length");
    long long cells[2][2] = {{0, 0}, {0, 0}};
    for (Eigen::Index i = 0; i < n; ++i) {
        const int a = factor_a[static_cast<std::size_t>(i)];
        const int b = factor_b[static_cast<std::size_t>(i)];
        if ((a != 0 && a != 1) || (b != 0 && b != 1)) throw InvalidInput("ANOVA factors must be binary (0/1)");
        if (!std::isfinite(y[static_cast<std::size_t>(i)])) throw InvalidInput("ANOVA response has non-finite values");
        ++cells[a][b];
    }
    for (auto& row : cells)
        for (long long count : row)
            if (count == 0) throw InvalidInput("every cell of the 2x2 design needs at least one observation");
    if (n - 4 < 1) throw InvalidInput("ANOVA needs at least one residual degree of freedom");

    Eigen::MatrixXd x(n, 4);
    Eigen::VectorXd response(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = factor_a[static_cast<std::size_t>(i)];
        const double b = factor_b[static_cast<std::size_t>(i)];
        x.row(i) << 1.0, a, b, a * b;
        response(i) = y[static_cast<std::size_t>(i)];
    }
    auto rss = [&](Eigen::Index columns) {
        const Eigen::MatrixXd block = x.leftCols(columns);
        const Eigen::VectorXd coef = block.colPivHouseholderQr().solve(response);
        return (response - block * coef).squaredNorm();
    };
    const double rss0 = rss(1);
    const double rss1 = rss(2);
    const double rss2 = rss(3);
    const double rss3 = rss(4);
    const double residual_df = static_cast<double>(n - 4);
    const double mse = rss3 / residual_df;

    std::vector<AnovaRow> table;
    const double ss[3] = {std::max(0.0, rss0 - rss1), std::max(0.0, rss1 - rss2), std::max(0.0, rss2 - rss3)};
    const char* names[3] = {"A", "B", "A:B"};
    for (int k = 0; k < 3; ++k) {
        double f;
        if (mse > 0.0)
            f = ss[k] / mse;
        else
            f = ss[k] > 0.0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
        table.push_back({names[k], ss[k], 1.0, f, stats::f_sf(f, 1.0, residual_df)});
    }
    table.push_back({"Residuals", rss3, residual_df, std::numeric_limits<double>::quiet_NaN(),
                     std::numeric_limits<double>::quiet_NaN()});
    return table;
}

}  // namespace stereobias
