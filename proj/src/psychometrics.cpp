#include "stereobias/psychometrics.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <unordered_set>

#include <Eigen/Cholesky>

#include "stereobias/io.hpp"

namespace stereobias {

namespace {

using Esf = ScaledEsf<double>;

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double esf_ratio(const Esf& num, Eigen::Index r_num, const Esf& den, Eigen::Index r_den) {
    return std::ldexp(num.mantissa(r_num) / den.mantissa(r_den), num.exponent - den.exponent);
}

Eigen::VectorXd without(const Eigen::VectorXd& values, Eigen::Index skip_a, Eigen::Index skip_b = -1) {
    Eigen::VectorXd out(values.size() - (skip_b >= 0 ? 2 : 1));
    Eigen::Index w = 0;
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (i != skip_a && i != skip_b) out(w++) = values(i);
    return out;
}

// Persons sharing one set of answered items; only raw scores strictly
// between 0 and k carry information about the items.
struct ResponsePattern {
    std::vector<Eigen::Index> items;
    Eigen::VectorXd score_counts;  // n_r, r = 0..k
};

struct ConditionalTerms {
    double log_likelihood = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd information;
};

class ConditionalLikelihood {
public:
    ConditionalLikelihood(const ResponseMatrix& matrix, RaschFit& fit) : items_(matrix.items()) {
        item_scores_ = Eigen::VectorXd::Zero(items_);
        std::map<std::string, ResponsePattern> patterns;
        for (Eigen::Index p = 0; p < matrix.persons(); ++p) {
            std::string key(static_cast<std::size_t>(items_), '0');
            long long answered = 0;
            long long score = 0;
            for (Eigen::Index j = 0; j < items_; ++j) {
                const int v = matrix.values(p, j);
                if (v == ResponseMatrix::kMissing) continue;
                key[static_cast<std::size_t>(j)] = '1';
                ++answered;
                score += v;
            }
            if (answered < 2 || score == 0 || score == answered) {
                fit.excluded_persons.push_back(p);
                continue;
            }
            auto [it, inserted] = patterns.try_emplace(key);
            if (inserted) {
                for (Eigen::Index j = 0; j < items_; ++j)
                    if (key[static_cast<std::size_t>(j)] == '1') it->second.items.push_back(j);
                it->second.score_counts = Eigen::VectorXd::Zero(answered + 1);
            }
            it->second.score_counts(score) += 1.0;
            for (Eigen::Index j = 0; j < items_; ++j)
                if (matrix.values(p, j) == 1) item_scores_(j) += 1.0;
            ++fit.informative_persons;
        }
        for (auto& [key, pattern] : patterns) patterns_.push_back(std::move(pattern));
    }

    double log_likelihood(const Eigen::VectorXd& difficulties) const {
        double value = -item_scores_.dot(difficulties);
        for (const auto& pattern : patterns_) {
            const auto eps = easiness(pattern, difficulties);
            const Esf full = elementary_symmetric_scaled(eps);
            for (Eigen::Index r = 1; r + 1 < full.mantissa.size(); ++r)
                if (pattern.score_counts(r) > 0.0) value -= pattern.score_counts(r) * full.log_value(r);
        }
        return value;
    }

    ConditionalTerms evaluate(const Eigen::VectorXd& difficulties) const {
        ConditionalTerms terms;
        terms.log_likelihood = -item_scores_.dot(difficulties);
        terms.gradient = -item_scores_;
        terms.information = Eigen::MatrixXd::Zero(items_, items_);

        for (const auto& pattern : patterns_) {
            const auto eps = easiness(pattern, difficulties);
            const Eigen::Index k = eps.size();
            const Esf full = elementary_symmetric_scaled(eps);
            std::vector<Esf> leave_one;
            leave_one.reserve(static_cast<std::size_t>(k));
            for (Eigen::Index a = 0; a < k; ++a) leave_one.push_back(elementary_symmetric_scaled(without(eps, a)));

            // pi(r, a) = P(x_a = 1 | raw score r)
            Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(k + 1, k);
            for (Eigen::Index r = 1; r < k; ++r) {
                const double n_r = pattern.score_counts(r);
                if (n_r == 0.0) continue;
                terms.log_likelihood -= n_r * full.log_value(r);
                for (Eigen::Index a = 0; a < k; ++a) pi(r, a) = eps(a) * esf_ratio(leave_one[a], r - 1, full, r);
            }

            for (Eigen::Index a = 0; a < k; ++a) {
                const Eigen::Index ja = pattern.items[static_cast<std::size_t>(a)];
                double expected = 0.0;
                double variance = 0.0;
                for (Eigen::Index r = 1; r < k; ++r) {
                    const double n_r = pattern.score_counts(r);
                    expected += n_r * pi(r, a);
                    variance += n_r * pi(r, a) * (1.0 - pi(r, a));
                }
                terms.gradient(ja) += expected;
                terms.information(ja, ja) += variance;

                for (Eigen::Index b = a + 1; b < k; ++b) {
                    const Eigen::Index jb = pattern.items[static_cast<std::size_t>(b)];
                    const Esf pair = elementary_symmetric_scaled(without(eps, a, b));
                    double covariance = 0.0;
                    for (Eigen::Index r = 1; r < k; ++r) {
                        const double n_r = pattern.score_counts(r);
                        if (n_r == 0.0) continue;
                        const double joint = r >= 2 ? eps(a) * eps(b) * esf_ratio(pair, r - 2, full, r) : 0.0;
                        covariance += n_r * (joint - pi(r, a) * pi(r, b));
                    }
                    terms.information(ja, jb) += covariance;
                    terms.information(jb, ja) += covariance;
                }
            }
        }
        return terms;
    }

private:
    static Eigen::VectorXd easiness(const ResponsePattern& pattern, const Eigen::VectorXd& difficulties) {
        Eigen::VectorXd eps(static_cast<Eigen::Index>(pattern.items.size()));
        for (std::size_t a = 0; a < pattern.items.size(); ++a)
            eps(static_cast<Eigen::Index>(a)) = std::exp(-difficulties(pattern.items[a]));
        return eps;
    }

    Eigen::Index items_;
    Eigen::VectorXd item_scores_;
    std::vector<ResponsePattern> patterns_;
};

}  // namespace

ResponseMatrix load_response_matrix(const std::filesystem::path& path) {
    const std::string origin = path.string();
    const auto rows = io::read_csv(path);
    if (rows.empty()) throw ParseError(origin, 0, "missing header row");
    const auto& header = rows.front().fields;
    if (header.size() < 2) throw ParseError(origin, rows.front().line, "expected person_id and item columns");

    ResponseMatrix matrix;
    std::unordered_set<std::string> seen;
    for (std::size_t c = 1; c < header.size(); ++c) {
        std::string id(io::trim(header[c]));
        if (id.empty()) throw ParseError(origin, rows.front().line, "empty item id in header");
        if (!seen.insert(id).second) throw ParseError(origin, rows.front().line, "duplicate item id '" + id + "'");
        matrix.item_ids.push_back(std::move(id));
    }
    seen.clear();
    matrix.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(header.size() - 1));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.size())
            throw ParseError(origin, row.line,
                             "expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(row.fields.size()));
        std::string person(io::trim(row.fields[0]));
        if (person.empty()) throw ParseError(origin, row.line, "empty person id");
        if (!seen.insert(person).second) throw ParseError(origin, row.line, "duplicate person id '" + person + "'");
        matrix.person_ids.push_back(std::move(person));
        for (std::size_t c = 1; c < header.size(); ++c) {
            const std::string_view cell = io::trim(row.fields[c]);
            int value;
            if (cell.empty() || cell == "NA")
                value = ResponseMatrix::kMissing;
            else if (cell == "0")
                value = 0;
            else if (cell == "1")
                value = 1;
            else
                throw ParseError(origin, row.line, "response must be 0, 1 or empty, got '" + std::string(cell) + "'");
            matrix.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) = value;
        }
    }
    return matrix;
}

ResponseMatrix drop_empty(const ResponseMatrix& matrix) {
    const auto observed = (matrix.values.array() != ResponseMatrix::kMissing).cast<int>();
    std::vector<Eigen::Index> rows;
    std::vector<Eigen::Index> cols;
    for (Eigen::Index p = 0; p < matrix.persons(); ++p)
        if (observed.row(p).sum() > 0) rows.push_back(p);
    for (Eigen::Index j = 0; j < matrix.items(); ++j)
        if (observed.col(j).sum() > 0) cols.push_back(j);
    ResponseMatrix out;
    out.values = matrix.values(rows, cols);
    for (auto p : rows) out.person_ids.push_back(matrix.person_ids[static_cast<std::size_t>(p)]);
    for (auto j : cols) out.item_ids.push_back(matrix.item_ids[static_cast<std::size_t>(j)]);
    return out;
}

RaschFit fit_rasch_cml(const ResponseMatrix& matrix, const RaschOptions& options, const Eigen::VectorXd* start) {
    const Eigen::Index k = matrix.items();
    if (k < 2 || matrix.persons() < 2) throw InvalidInput("Rasch fit needs at least two persons and two items");
    if (static_cast<Eigen::Index>(matrix.item_ids.size()) != k)
        throw InvalidInput("item id count does not match the response matrix");

    Eigen::VectorXd ones(k);
    Eigen::VectorXd zeros(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        ones(j) = static_cast<double>((matrix.values.col(j).array() == 1).count());
        zeros(j) = static_cast<double>((matrix.values.col(j).array() == 0).count());
        if (ones(j) == 0.0 || zeros(j) == 0.0)
            throw InvalidInput("item '" + matrix.item_ids[static_cast<std::size_t>(j)] +
                               "' has a constant response column");
    }

    RaschFit fit;
    fit.item_ids = matrix.item_ids;
    const ConditionalLikelihood likelihood(matrix, fit);
    if (fit.informative_persons == 0) throw InvalidInput("no person has a raw score strictly between 0 and k");

    Eigen::VectorXd delta;
    if (start != nullptr) {
        if (start->size() != k) throw InvalidInput("starting values have the wrong length");
        delta = *start;
    } else {
        delta = ((zeros.array() + 0.5) / (ones.array() + 0.5)).log().matrix();
    }
    delta.array() -= delta.mean();

    const Eigen::MatrixXd centring = Eigen::MatrixXd::Constant(k, k, 1.0 / static_cast<double>(k));
    ConditionalTerms terms = likelihood.evaluate(delta);
    for (Eigen::Index j = 0; j < k; ++j)
        if (!(terms.information(j, j) > 0.0))
            throw InvalidInput("item '" + matrix.item_ids[static_cast<std::size_t>(j)] +
                               "' has no responses from informative persons");

    while (true) {
        fit.max_abs_gradient = terms.gradient.cwiseAbs().maxCoeff();
        if (fit.max_abs_gradient < options.gradient_tolerance) {
            fit.converged = true;
            break;
        }
        if (fit.iterations >= options.max_iterations) break;

        // information * 1 = 0 and gradient . 1 = 0, so adding J/k leaves the
        // Newton step unchanged on the sum-zero subspace and makes it solvable.
        const Eigen::LDLT<Eigen::MatrixXd> solver(terms.information + centring);
        Eigen::VectorXd step = solver.solve(terms.gradient);
        step.array() -= step.mean();

        double scale = 1.0;
        Eigen::VectorXd candidate = delta + step;
        double candidate_ll = likelihood.log_likelihood(candidate);
        const double slack = 1e-12 * std::max(1.0, std::abs(terms.log_likelihood));
        for (int halving = 0; halving < 40 && !(candidate_ll >= terms.log_likelihood - slack); ++halving) {
            scale *= 0.5;
            candidate = delta + scale * step;
            candidate_ll = likelihood.log_likelihood(candidate);
        }
        delta = candidate;
        delta.array() -= delta.mean();
        ++fit.iterations;
        terms = likelihood.evaluate(delta);
        if (!delta.allFinite()) break;
    }

    fit.difficulties = delta;
    fit.log_conditional_likelihood = terms.log_likelihood;
    const Eigen::MatrixXd covariance =
        Eigen::LDLT<Eigen::MatrixXd>(terms.information + centring).solve(Eigen::MatrixXd::Identity(k, k)) -
        centring;
    fit.standard_errors = covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    return fit;
}

double solve_tendency(const Eigen::Ref<const Eigen::VectorXd>& difficulties, double target_score) {
    auto expected = [&](double theta, double* slope) {
        double sum = 0.0;
        double info = 0.0;
        for (Eigen::Index j = 0; j < difficulties.size(); ++j) {
            const double p = logistic(theta - difficulties(j));
            sum += p;
            info += p * (1.0 - p);
        }
        if (slope != nullptr) *slope = info;
        return sum;
    };
    double lo = -30.0;
    double hi = 30.0;
    if (expected(lo, nullptr) >= target_score) return lo;
    if (expected(hi, nullptr) <= target_score) return hi;
    while (hi - lo > 1e-3) {
        const double mid = 0.5 * (lo + hi);
        (expected(mid, nullptr) < target_score ? lo : hi) = mid;
    }
    double theta = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        double slope = 0.0;
        const double residual = expected(theta, &slope) - target_score;
        if (residual == 0.0 || slope <= 0.0) break;
        (residual < 0.0 ? lo : hi) = theta;
        double next = theta - residual / slope;
        if (next < lo || next > hi) next = 0.5 * (lo + hi);
        if (std::abs(next - theta) < 1e-13) {
            theta = next;
            break;
        }
        theta = next;
    }
    return theta;
}

std::vector<PersonTendency> estimate_tendencies(const ResponseMatrix& matrix,
                                                const Eigen::Ref<const Eigen::VectorXd>& difficulties) {
    if (difficulties.size() != matrix.items()) throw InvalidInput("difficulty count does not match item count");
    if (!difficulties.allFinite()) throw InvalidInput("difficulties must be finite");
    std::vector<PersonTendency> out;
    out.reserve(static_cast<std::size_t>(matrix.persons()));
    for (Eigen::Index p = 0; p < matrix.persons(); ++p) {
        PersonTendency person;
        if (static_cast<Eigen::Index>(matrix.person_ids.size()) == matrix.persons())
            person.person_id = matrix.person_ids[static_cast<std::size_t>(p)];
        std::vector<double> answered;
        for (Eigen::Index j = 0; j < matrix.items(); ++j) {
            const int v = matrix.values(p, j);
            if (v == ResponseMatrix::kMissing) continue;
            answered.push_back(difficulties(j));
            person.raw_score += v;
        }
        person.answered = static_cast<long long>(answered.size());
        if (answered.empty()) {
            person.estimable = false;
            person.theta = std::numeric_limits<double>::quiet_NaN();
            person.standard_error = std::numeric_limits<double>::quiet_NaN();
            out.push_back(std::move(person));
            continue;
        }
        const double k = static_cast<double>(answered.size());
        const double r = static_cast<double>(person.raw_score);
        person.extremal = person.raw_score == 0 || person.raw_score == person.answered;
        const double target = std::min(std::max(r, 0.5), k - 0.5);
        const Eigen::Map<const Eigen::VectorXd> block(answered.data(), static_cast<Eigen::Index>(answered.size()));
        person.theta = solve_tendency(block, target);
        double info = 0.0;
        for (const double d : answered) {
            const double prob = logistic(person.theta - d);
            info += prob * (1.0 - prob);
        }
        person.standard_error = 1.0 / std::sqrt(info);
        out.push_back(std::move(person));
    }
    return out;
}

}  // namespace stereobias
