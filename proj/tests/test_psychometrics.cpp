#include <doctest.h>

#include <cmath>
#include <vector>

#include "stereobias/psychometrics.hpp"
#include "stereobias/random.hpp"
#include "stereobias/simulate.hpp"
#include "stereobias/stats.hpp"
#include "support.hpp"

using namespace stereobias;
using doctest::Approx;

namespace {

Eigen::VectorXd brute_force_esf(const Eigen::VectorXd& eps) {
    const auto k = eps.size();
    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(k + 1);
    for (unsigned mask = 0; mask < (1u << k); ++mask) {
        double product = 1.0;
        int size = 0;
        for (Eigen::Index j = 0; j < k; ++j)
            if (mask & (1u << j)) {
                product *= eps(j);
                ++size;
            }
        gamma(size) += product;
    }
    return gamma;
}

ResponseMatrix matrix_of(const std::vector<std::vector<int>>& rows) {
    ResponseMatrix m;
    m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t p = 0; p < rows.size(); ++p) {
        m.person_ids.push_back("p" + std::to_string(p));
        for (std::size_t j = 0; j < rows[p].size(); ++j)
            m.values(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)) = rows[p][j];
    }
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) m.item_ids.push_back("i" + std::to_string(j));
    return m;
}

const std::vector<std::vector<int>> kComplete{{1, 0, 0, 0}, {1, 1, 0, 0}, {0, 1, 0, 0}, {1, 1, 1, 0},
                                              {1, 0, 1, 0}, {0, 0, 1, 1}, {1, 1, 0, 1}, {1, 0, 0, 0},
                                              {0, 1, 1, 0}, {1, 1, 1, 0}, {1, 0, 0, 1}, {0, 0, 0, 1}};

const std::vector<std::vector<int>> kIncomplete{{1, 0, -1, 0}, {1, 1, 0, -1}, {0, 1, 0, 0},  {1, -1, 1, 0},
                                                {1, 0, 1, 0},  {-1, 0, 1, 1}, {1, 1, 0, 1},  {1, 0, -1, 0},
                                                {0, 1, 1, 0},  {1, 1, 1, 0},  {1, 0, 0, 1},  {0, -1, 0, 1},
                                                {0, 1, -1, 1}};

}  // namespace

TEST_CASE("elementary symmetric function examples") {
    CHECK(elementary_symmetric(Eigen::Vector2d(1, 1)) == Eigen::Vector3d(1, 2, 1));
    const Eigen::VectorXd gamma = elementary_symmetric(Eigen::Vector3d(1, 2, 3));
    CHECK(gamma(0) == 1.0);
    CHECK(gamma(1) == Approx(6));
    CHECK(gamma(2) == Approx(11));
    CHECK(gamma(3) == Approx(6));
    CHECK_THROWS_AS(elementary_symmetric(Eigen::Vector2d(1, 0)), InvalidInput);
    CHECK_THROWS_AS(elementary_symmetric(Eigen::Vector2d(1, -2)), InvalidInput);
}

TEST_CASE("elementary symmetric functions match subset enumeration") {
    Rng rng(17);
    for (Eigen::Index k = 1; k <= 12; ++k) {
        Eigen::VectorXd eps(k);
        for (Eigen::Index j = 0; j < k; ++j) eps(j) = std::exp(rng.normal(0.0, 1.5));
        const Eigen::VectorXd gamma = elementary_symmetric(eps);
        const Eigen::VectorXd oracle = brute_force_esf(eps);
        CHECK(gamma(0) == 1.0);
        for (Eigen::Index r = 0; r <= k; ++r) CHECK(gamma(r) == Approx(oracle(r)).epsilon(1e-10));
        CHECK(gamma.sum() == Approx((1.0 + eps.array()).prod()).epsilon(1e-10));
    }
}

TEST_CASE("scaled elementary symmetric functions survive overflow") {
    const Eigen::VectorXd eps = Eigen::VectorXd::Constant(400, 1e10);
    const auto scaled = elementary_symmetric_scaled(eps);
    CHECK(scaled.exponent != 0);
    // gamma_400 = 1e4000; gamma_399 = 400 * 1e3990.
    CHECK(scaled.log_value(400) == Approx(4000.0 * std::log(10.0)).epsilon(1e-12));
    CHECK(scaled.log_value(399) - scaled.log_value(400) == Approx(std::log(400.0) - 10.0 * std::log(10.0)));
}

TEST_CASE("CML matches the brute-force optimum on a complete matrix") {
    const auto fit = fit_rasch_cml(matrix_of(kComplete));
    REQUIRE(fit.converged);
    const Eigen::Vector4d oracle(-0.6823321809149678, -0.07861786198976758, 0.22203460253818488, 0.5389154403665506);
    for (int j = 0; j < 4; ++j) CHECK(fit.difficulties(j) == Approx(oracle(j)).epsilon(1e-5));
    CHECK(fit.log_conditional_likelihood == Approx(-17.358636770870984).epsilon(1e-8));
    CHECK(std::abs(fit.difficulties.sum()) < 1e-8);
    CHECK(fit.max_abs_gradient < 1e-8);
}

TEST_CASE("CML handles incomplete designs by answered-item patterns") {
    const auto fit = fit_rasch_cml(matrix_of(kIncomplete));
    REQUIRE(fit.converged);
    const Eigen::Vector4d oracle(-0.5117533687011363, -0.03632878670763494, 0.20534077923990213, 0.3427413761688691);
    for (int j = 0; j < 4; ++j) CHECK(fit.difficulties(j) == Approx(oracle(j)).epsilon(1e-5));
    CHECK(fit.log_conditional_likelihood == Approx(-16.513250219461092).epsilon(1e-8));
}

TEST_CASE("two-item closed form") {
    std::vector<std::vector<int>> rows;
    for (int k = 0; k < 20; ++k) rows.push_back({1, 0});
    for (int k = 0; k < 10; ++k) rows.push_back({0, 1});
    for (int k = 0; k < 7; ++k) rows.push_back({1, 1});
    for (int k = 0; k < 5; ++k) rows.push_back({0, 0});
    const auto fit = fit_rasch_cml(matrix_of(rows));
    CHECK(fit.difficulties(1) - fit.difficulties(0) == Approx(std::log(2.0)).epsilon(1e-6));
    CHECK(fit.excluded_persons.size() == 12);
    CHECK(fit.informative_persons == 30);
}

TEST_CASE("identical item columns get equal difficulties") {
    const auto fit = fit_rasch_cml(matrix_of({{1, 1}, {0, 0}, {1, 1}, {1, 0}, {0, 1}}));
    CHECK(fit.difficulties(0) == Approx(0.0).epsilon(1e-10));
    CHECK(fit.difficulties(1) == Approx(0.0).epsilon(1e-10));
}

TEST_CASE("constant item column is rejected by name") {
    auto m = matrix_of({{1, 1}, {0, 1}, {1, 1}});
    m.item_ids = {"q1", "always"};
    try {
        fit_rasch_cml(m);
        FAIL("expected an error");
    } catch (const InvalidInput& e) {
        CHECK(std::string(e.what()).find("always") != std::string::npos);
    }
}

TEST_CASE("CML is person-invariant, item-equivariant and start-independent") {
    const auto base = fit_rasch_cml(matrix_of(kComplete));
    auto reversed_persons = kComplete;
    std::reverse(reversed_persons.begin(), reversed_persons.end());
    const auto persons = fit_rasch_cml(matrix_of(reversed_persons));
    CHECK((persons.difficulties - base.difficulties).cwiseAbs().maxCoeff() < 1e-9);

    const std::vector<int> order{2, 0, 3, 1};
    std::vector<std::vector<int>> permuted;
    for (const auto& row : kComplete) permuted.push_back({row[2], row[0], row[3], row[1]});
    const auto items = fit_rasch_cml(matrix_of(permuted));
    for (int j = 0; j < 4; ++j) CHECK(items.difficulties(j) == Approx(base.difficulties(order[j])).epsilon(1e-9));

    Rng rng(23);
    for (int s = 0; s < 10; ++s) {
        Eigen::VectorXd start(4);
        for (int j = 0; j < 4; ++j) start(j) = rng.normal(0.0, 2.0) + 5.0;
        const auto refit = fit_rasch_cml(matrix_of(kComplete), {}, &start);
        CHECK((refit.difficulties - base.difficulties).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("CML recovers simulated difficulties") {
    const auto sim = simulate_rasch(500, 30, 99);
    const auto fit = fit_rasch_cml(sim.responses);
    CHECK(fit.converged);
    CHECK(stats::pearson(fit.difficulties, sim.truth.delta) >= 0.9);
}

TEST_CASE("CML handles many items without overflow") {
    const auto sim = simulate_rasch(300, 120, 5);
    const auto fit = fit_rasch_cml(sim.responses);
    CHECK(fit.converged);
    CHECK(fit.difficulties.allFinite());
}

TEST_CASE("tendency examples") {
    auto m = matrix_of({std::vector<int>(10, 0)});
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(10);
    CHECK(solve_tendency(zero, 5.0) == Approx(0.0).epsilon(1e-10));
    CHECK(solve_tendency(zero, 7.0) == Approx(std::log(7.0 / 3.0)).epsilon(1e-10));

    for (int j = 0; j < 10; ++j) m.values(0, j) = 1;
    const auto perfect = estimate_tendencies(m, zero);
    CHECK(perfect[0].extremal);
    CHECK(perfect[0].raw_score == 10);
    CHECK(perfect[0].theta == Approx(std::log(9.5 / 0.5)).epsilon(1e-10));

    m.values.row(0).setConstant(ResponseMatrix::kMissing);
    CHECK_FALSE(estimate_tendencies(m, zero)[0].estimable);
}

TEST_CASE("tendency is strictly increasing in raw score") {
    Eigen::VectorXd delta(8);
    delta << -1.5, -0.7, -0.2, 0.0, 0.3, 0.6, 1.1, 2.0;
    double previous = -1e9;
    for (int r = 0; r <= 8; ++r) {
        const double target = std::min(std::max(static_cast<double>(r), 0.5), 7.5);
        const double theta = solve_tendency(delta, target);
        CHECK(theta > previous);
        previous = theta;
    }
}

TEST_CASE("response matrix loader and empty-row filter") {
    testing::TempDir dir;
    const auto m = load_response_matrix(dir.write("r.csv", "person_id,a,b,c\nx,1,0,NA\ny,,,\nz,0,1,1\n"));
    CHECK(m.persons() == 3);
    CHECK(m.values(0, 2) == ResponseMatrix::kMissing);
    CHECK_FALSE(m.complete());
    const auto kept = drop_empty(m);
    CHECK(kept.persons() == 2);
    CHECK(kept.person_ids == std::vector<std::string>{"x", "z"});
    CHECK_THROWS_AS(load_response_matrix(dir.write("bad.csv", "person_id,a\nx,2\n")), ParseError);
}

TEST_CASE("cronbach alpha") {
    Eigen::MatrixXd same(4, 2);
    same << 1, 1, 2, 2, 3, 3, 5, 5;
    CHECK(cronbach_alpha(same) == Approx(1.0));
    Eigen::MatrixXd uncorrelated(4, 2);
    uncorrelated << 1, 1, 1, -1, -1, 1, -1, -1;
    CHECK(cronbach_alpha(uncorrelated) == Approx(0.0).scale(1.0));
    Eigen::MatrixXd ab(4, 2);
    ab << 1, 1, 2, 2, 3, 3, 4, 5;
    CHECK(cronbach_alpha(ab) == Approx(0.97196261682243).epsilon(1e-12));
    CHECK_THROWS_AS(cronbach_alpha(Eigen::MatrixXd::Ones(4, 2)), Undefined);
    CHECK_THROWS_AS(cronbach_alpha(Eigen::MatrixXd::Ones(4, 1)), InvalidInput);
}
