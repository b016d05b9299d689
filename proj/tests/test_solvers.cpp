#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "oracles.hpp"
#include "srot/error.hpp"
#include "srot/measures.hpp"
#include "srot/solvers.hpp"

using namespace srot;

namespace {

CostMatrix euclid_cost(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    return cost_matrix(make_empirical(x), make_empirical(y), CostKind::Euclidean);
}

Eigen::VectorXd uniform(int n) { return Eigen::VectorXd::Constant(n, 1.0 / n); }

}  // namespace

TEST_CASE("cost_matrix basics") {
    Eigen::MatrixXd x(2, 2), y(2, 2);
    x << 0, 0, 3, 4;
    y << 0, 0, 3, 4;
    const CostMatrix c = euclid_cost(x, y);
    CHECK(c.values(0, 0) == 0.0);
    CHECK(c.values(1, 1) == 0.0);
    CHECK(c.values(0, 1) == doctest::Approx(5.0));
    CHECK(c.values(1, 0) == doctest::Approx(5.0));

    const CostMatrix t = cost_matrix(make_empirical(x), make_empirical(y), CostKind::Truncated, 2.0);
    CHECK(t.values(0, 1) == doctest::Approx(4.0));  // min{5, 2*2}
    CHECK(t.values(0, 0) == 0.0);
    CHECK((t.values.array() <= 2.0 * t.param + 1e-15).all());

    const CostMatrix sq = cost_matrix(make_empirical(x), make_empirical(y), CostKind::SquaredEuclidean);
    CHECK(sq.values(0, 1) == doctest::Approx(25.0));
}

TEST_CASE("solve_exact identity transport") {
    Eigen::MatrixXd pts(2, 1);
    pts << 0, 1;
    const CostMatrix c = euclid_cost(pts, pts);
    const TransportPlan plan = solve_exact(uniform(2), uniform(2), c);
    CHECK(plan.converged);
    CHECK(plan.objective == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(plan.coupling(0, 0) == doctest::Approx(0.5));
    CHECK(plan.coupling(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("solve_exact monotone matching on the line") {
    Eigen::MatrixXd x(2, 1), y(2, 1);
    x << 0, 1;
    y << 2, 3;
    const TransportPlan plan = solve_exact(uniform(2), uniform(2), euclid_cost(x, y));
    CHECK(plan.objective == doctest::Approx(2.0));
}

TEST_CASE("solve_exact matches the permutation oracle on 6x6 instances") {
    Rng rng(1234);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 6;
        const Eigen::MatrixXd x = oracles::random_points(rng, n, 3);
        const Eigen::MatrixXd y = oracles::random_points(rng, n, 3);
        const CostMatrix c = euclid_cost(x, y);
        const TransportPlan plan = solve_exact(uniform(n), uniform(n), c);
        const double oracle = oracles::permutation_min_cost(c.values);
        CHECK(plan.objective == doctest::Approx(oracle).epsilon(1e-9));
    }
}

TEST_CASE("solve_exact marginals, vertex support, duality gap") {
    Rng rng(77);
    const int n = 11, m = 13;
    const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
    const Eigen::MatrixXd y = oracles::random_points(rng, m, 2);
    Eigen::VectorXd a(n), b(m);
    for (int i = 0; i < n; ++i) a(i) = 0.5 + rng.uniform();
    for (int j = 0; j < m; ++j) b(j) = 0.5 + rng.uniform();
    a /= a.sum();
    b /= b.sum();
    const CostMatrix c = euclid_cost(x, y);
    const TransportPlan plan = solve_exact(a, b, c);

    CHECK((plan.row_marginals - a).cwiseAbs().maxCoeff() <= 1e-7);
    CHECK((plan.col_marginals - b).cwiseAbs().maxCoeff() <= 1e-7);
    CHECK((plan.row_marginals - plan.coupling.rowwise().sum()).cwiseAbs().maxCoeff() <= 1e-12);

    int nonzeros = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) nonzeros += plan.coupling(i, j) > 0.0;
    CHECK(nonzeros <= n + m - 1);

    const double dual = a.dot(plan.dual_row) + b.dot(plan.dual_col);
    CHECK(std::abs(plan.objective - dual) <= 1e-7);
}

TEST_CASE("solve_exact with uniform weights stays deterministic") {
    Rng rng(5);
    const Eigen::MatrixXd x = oracles::random_points(rng, 8, 2);
    const Eigen::MatrixXd y = oracles::random_points(rng, 8, 2);
    const CostMatrix c = euclid_cost(x, y);
    const TransportPlan p1 = solve_exact(uniform(8), uniform(8), c);
    const TransportPlan p2 = solve_exact(uniform(8), uniform(8), c);
    CHECK((p1.coupling - p2.coupling).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solve_exact mass mismatch") {
    Eigen::MatrixXd x(2, 1);
    x << 0, 1;
    Eigen::VectorXd a(2), b(2);
    a << 0.5, 0.5;
    b << 0.6, 0.6;
    CHECK_THROWS_AS(solve_exact(a, b, euclid_cost(x, x)), MassMismatch);
}

TEST_CASE("sinkhorn self-transport stays within the entropic slack") {
    Rng rng(9);
    const int n = 6;
    const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
    const CostMatrix c = euclid_cost(x, x);
    SolverConfig cfg;
    cfg.epsilon = 0.01;
    const TransportPlan plan = sinkhorn(uniform(n), uniform(n), c, cfg);
    CHECK(plan.converged);
    CHECK(plan.objective >= 0.0);
    CHECK(plan.objective <= cfg.epsilon * std::log(static_cast<double>(n)) + 1e-9);
    CHECK((plan.coupling.array() > 0.0).all());
}

TEST_CASE("sinkhorn approaches the exact objective at small epsilon") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 5;
        const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
        const Eigen::MatrixXd y = oracles::random_points(rng, n, 2);
        const CostMatrix c = euclid_cost(x, y);
        SolverConfig cfg;
        cfg.epsilon = 1e-3;
        const TransportPlan entropic = sinkhorn(uniform(n), uniform(n), c, cfg);
        const TransportPlan exact = solve_exact(uniform(n), uniform(n), c);
        CHECK(std::abs(entropic.objective - exact.objective) <= 1e-2 * (1.0 + exact.objective));
    }
}

TEST_CASE("sinkhorn at huge epsilon returns the independent coupling") {
    Rng rng(12);
    const int n = 5;
    const Eigen::MatrixXd x = oracles::random_points(rng, n, 2, 0.2);
    const Eigen::MatrixXd y = oracles::random_points(rng, n, 2, 0.2);
    const CostMatrix c = euclid_cost(x, y);
    SolverConfig cfg;
    cfg.epsilon = 10.0;
    const TransportPlan plan = sinkhorn(uniform(n), uniform(n), c, cfg);
    const Eigen::MatrixXd indep = uniform(n) * uniform(n).transpose();
    CHECK((plan.coupling - indep).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("sinkhorn makes monotone progress (dual ascent) past the first iteration") {
    // The transport cost <pi_k, C> itself is not monotone from a cold start
    // (the early infeasible plans sit on the cheap cells and the cost climbs
    // toward the optimum), so the monotone-progress check is on the dual,
    // which generalized Sinkhorn ascends coordinate-wise.
    Rng rng(21);
    const int n = 5;
    const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
    const Eigen::MatrixXd y = oracles::random_points(rng, n, 2);
    const CostMatrix c = euclid_cost(x, y);
    const double eps = 0.05;
    auto dual_value = [&](const TransportPlan& plan) {
        double exp_term = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                exp_term += (1.0 / (n * n)) *
                            std::exp((plan.dual_row(i) + plan.dual_col(j) - c.values(i, j)) / eps);
        return plan.dual_row.sum() / n + plan.dual_col.sum() / n - eps * (exp_term - 1.0);
    };
    double prev = -std::numeric_limits<double>::infinity();
    for (int iters = 2; iters <= 40; iters += 2) {
        SolverConfig cfg;
        cfg.epsilon = eps;
        cfg.max_iters = iters;
        cfg.tol = 1e-16;  // force the full iteration budget
        const TransportPlan plan = sinkhorn(uniform(n), uniform(n), c, cfg);
        CHECK(dual_value(plan) >= prev - 1e-10);
        prev = dual_value(plan);
    }
}

TEST_CASE("unbalanced sinkhorn approaches balanced as tau grows") {
    Rng rng(44);
    for (int trial = 0; trial < 3; ++trial) {
        const int n = 5;
        const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
        const Eigen::MatrixXd y = oracles::random_points(rng, n, 2);
        const CostMatrix c = euclid_cost(x, y);
        SolverConfig cfg;
        cfg.epsilon = 1e-3;
        cfg.tau = 1e6;
        const TransportPlan uot = sinkhorn_unbalanced(uniform(n), uniform(n), c, cfg);
        const TransportPlan bal = sinkhorn(uniform(n), uniform(n), c, cfg);
        CHECK((uot.coupling - bal.coupling).cwiseAbs().maxCoeff() <= 1e-3);
    }
}

TEST_CASE("unbalanced sinkhorn transported mass grows with tau") {
    Rng rng(91);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 6;
        const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
        const Eigen::MatrixXd y = oracles::random_points(rng, n, 2);
        const CostMatrix c = euclid_cost(x, y);
        SolverConfig lo, hi;
        lo.epsilon = hi.epsilon = 0.01;
        lo.tau = 0.1;
        hi.tau = 1.0;
        const double mass_lo = sinkhorn_unbalanced(uniform(n), uniform(n), c, lo).transported_mass();
        const double mass_hi = sinkhorn_unbalanced(uniform(n), uniform(n), c, hi).transported_mass();
        CHECK(mass_lo <= mass_hi + 1e-6);
    }
}

TEST_CASE("unbalanced objective equals the penalized program value") {
    Rng rng(3);
    const int n = 4;
    const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
    const Eigen::MatrixXd y = oracles::random_points(rng, n, 2);
    const CostMatrix c = euclid_cost(x, y);
    SolverConfig cfg;
    cfg.epsilon = 0.05;
    cfg.tau = 0.5;
    const TransportPlan plan = sinkhorn_unbalanced(uniform(n), uniform(n), c, cfg);

    auto gkl = [](const Eigen::ArrayXd& p, const Eigen::ArrayXd& q) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            if (p(i) > 0) acc += p(i) * std::log(p(i) / q(i)) - p(i) + q(i);
            else acc += q(i);
        }
        return acc;
    };
    double value = (plan.coupling.array() * c.values.array()).sum();
    double kl_ref = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double p = plan.coupling(i, j), q = 1.0 / (n * n);
            kl_ref += p > 0 ? p * std::log(p / q) - p + q : q;
        }
    }
    value += cfg.epsilon * kl_ref;
    value += cfg.tau * gkl(plan.row_marginals.array(), uniform(n).array());
    value += cfg.tau * gkl(plan.col_marginals.array(), uniform(n).array());
    CHECK(plan.objective == doctest::Approx(value).epsilon(1e-10));
}

TEST_CASE("partial_ot at full mass equals the exact solve") {
    Rng rng(8);
    const int n = 5;
    const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
    const Eigen::MatrixXd y = oracles::random_points(rng, n, 2);
    const CostMatrix c = euclid_cost(x, y);
    const TransportPlan partial = partial_ot(uniform(n), uniform(n), c, 1.0);
    const TransportPlan exact = solve_exact(uniform(n), uniform(n), c);
    CHECK(partial.objective == doctest::Approx(exact.objective).epsilon(1e-10));
    CHECK(partial.transported_mass() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("partial_ot keeps the cheapest half") {
    Eigen::MatrixXd x(2, 1), y(2, 1);
    x << 0, 1;
    y << 0, 10;
    const CostMatrix c = euclid_cost(x, y);
    const TransportPlan plan = partial_ot(uniform(2), uniform(2), c, 0.5);
    CHECK(plan.coupling(0, 0) == doctest::Approx(0.5));
    CHECK(plan.objective == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(plan.transported_mass() == doctest::Approx(0.5));
}

TEST_CASE("partial_ot matches the k-matching oracle on 5x5 uniform instances") {
    Rng rng(1001);
    for (int trial = 0; trial < 4; ++trial) {
        const int n = 5, k = 3;  // m = 0.6
        const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
        const Eigen::MatrixXd y = oracles::random_points(rng, n, 2);
        const CostMatrix c = euclid_cost(x, y);
        const TransportPlan plan = partial_ot(uniform(n), uniform(n), c, 0.6);
        CHECK(plan.transported_mass() == doctest::Approx(0.6).epsilon(1e-7));
        CHECK((plan.row_marginals.array() <= uniform(n).array() + 1e-12).all());
        CHECK((plan.col_marginals.array() <= uniform(n).array() + 1e-12).all());
        const double oracle = oracles::partial_min_cost_uniform(c.values, k);
        CHECK(plan.objective == doctest::Approx(oracle).epsilon(1e-9));
    }
}

TEST_CASE("partial_ot objective is nondecreasing and continuous in m") {
    Rng rng(55);
    const int n = 6;
    const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
    const Eigen::MatrixXd y = oracles::random_points(rng, n, 2);
    const CostMatrix c = euclid_cost(x, y);
    const double lipschitz = c.values.maxCoeff();
    double prev = 0.0;
    double prev_m = 0.0;
    for (double m = 0.1; m <= 1.0001; m += 0.05) {
        const double mm = std::min(m, 1.0);
        const double obj = partial_ot(uniform(n), uniform(n), c, mm).objective;
        CHECK(obj >= prev - 1e-10);
        if (prev_m > 0.0) CHECK(obj - prev <= lipschitz * (mm - prev_m) + 1e-9);
        prev = obj;
        prev_m = mm;
    }
    CHECK_THROWS_AS(partial_ot(uniform(n), uniform(n), c, 1.5), InvalidMass);
    CHECK_THROWS_AS(partial_ot(uniform(n), uniform(n), c, 0.0), InvalidMass);
}

TEST_CASE("truncated_ot") {
    Rng rng(66);
    const int n = 5;
    const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
    const Eigen::MatrixXd y = oracles::random_points(rng, n, 2);
    const CostMatrix c = euclid_cost(x, y);
    const TransportPlan exact = solve_exact(uniform(n), uniform(n), c);

    SUBCASE("inactive truncation reproduces the exact solve") {
        const TransportPlan plan = truncated_ot(uniform(n), uniform(n), c, c.values.maxCoeff() / 2.0);
        CHECK(plan.objective == doctest::Approx(exact.objective).epsilon(1e-10));
    }
    SUBCASE("tiny lambda collapses the objective") {
        const double lambda = 1e-9;
        const TransportPlan plan = truncated_ot(uniform(n), uniform(n), c, lambda);
        CHECK(plan.objective <= 2.0 * lambda + 1e-12);
    }
    SUBCASE("objective nondecreasing in lambda, bounded by exact") {
        double prev = 0.0;
        for (double lambda : {0.01, 0.05, 0.1, 0.5, 1.0, 5.0}) {
            const double obj = truncated_ot(uniform(n), uniform(n), c, lambda).objective;
            CHECK(obj >= prev - 1e-12);
            CHECK(obj <= exact.objective + 1e-10);
            prev = obj;
        }
    }
}

TEST_CASE("rot wrapper") {
    Rng rng(13);
    const int n = 6;
    const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
    const Eigen::MatrixXd y = oracles::random_points(rng, n, 2);
    const CostMatrix c = euclid_cost(x, y);
    const TransportPlan exact = solve_exact(uniform(n), uniform(n), c);

    const TransportPlan zero_p = rot(uniform(n), uniform(n), c, 0.0, RotMode::Partial);
    CHECK(zero_p.objective == doctest::Approx(exact.objective).epsilon(1e-12));
    const TransportPlan zero_t = rot(uniform(n), uniform(n), c, 0.0, RotMode::Truncated);
    CHECK(zero_t.objective == doctest::Approx(exact.objective).epsilon(1e-10));

    const TransportPlan trimmed = rot(uniform(n), uniform(n), c, 0.05, RotMode::Partial);
    CHECK(trimmed.transported_mass() == doctest::Approx(0.9).epsilon(1e-7));

    CHECK_THROWS_AS(rot(uniform(n), uniform(n), c, 0.5, RotMode::Partial), SolverFailure);
}

TEST_CASE("plan json round trip") {
    namespace fs = std::filesystem;
    Rng rng(2);
    const int n = 4;
    const Eigen::MatrixXd x = oracles::random_points(rng, n, 2);
    const Eigen::MatrixXd y = oracles::random_points(rng, n, 2);
    const CostMatrix c = euclid_cost(x, y);
    const TransportPlan plan = solve_exact(uniform(n), uniform(n), c);
    const std::string path = (fs::temp_directory_path() / "srot_test_plan.json").string();
    save_plan_json(plan, path);
    const TransportPlan back = load_plan_json(path);
    CHECK(back.objective == plan.objective);
    CHECK(back.solver == plan.solver);
    CHECK((back.coupling - plan.coupling).cwiseAbs().maxCoeff() == 0.0);
    std::remove(path.c_str());
}
