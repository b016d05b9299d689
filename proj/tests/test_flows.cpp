#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "srot/error.hpp"
#include "srot/flows.hpp"

using namespace srot;

namespace {

// Linear boundary at x = split with "source" on the right half-plane,
// matching the flow dataset layout (the flowing source blob sits at x=2.5,
// the fixed contaminated side at the origin).
ClassifierModel boundary_model(double split, double slope = 20.0) {
    ClassifierModel model = init_model({2, 2}, 0);
    model.weights[0] << slope, 0.0, -slope, 0.0;
    model.biases[0] << -slope * split, slope * split;
    return model;
}

}  // namespace

TEST_CASE("ot_support_grad elementary cases") {
    Eigen::MatrixXd src(1, 2), tgt(1, 2);
    src << 0, 0;
    tgt << 3, 4;
    const DiscreteMeasure alpha = make_empirical(src);
    const DiscreteMeasure beta = make_empirical(tgt);
    TransportPlan plan;
    plan.coupling = Eigen::MatrixXd::Constant(1, 1, 1.0);

    const Eigen::MatrixXd g = ot_support_grad(plan, alpha, beta, CostKind::Euclidean);
    CHECK(g(0, 0) == doctest::Approx(0.6));
    CHECK(g(0, 1) == doctest::Approx(0.8));

    const Eigen::MatrixXd g2 = ot_support_grad(plan, alpha, beta, CostKind::SquaredEuclidean);
    CHECK(g2(0, 0) == doctest::Approx(6.0));
    CHECK(g2(0, 1) == doctest::Approx(8.0));

    // Coincident pair contributes nothing.
    const DiscreteMeasure same = make_empirical(src);
    const Eigen::MatrixXd g3 = ot_support_grad(plan, alpha, same, CostKind::Euclidean);
    CHECK(g3.cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(ot_support_grad(plan, alpha, beta, CostKind::Truncated), UnsupportedCost);
}

TEST_CASE("Euclidean support gradient norm is bounded by the plan mass") {
    Rng rng(17);
    const int n = 7, m = 9;
    const DiscreteMeasure alpha = make_empirical(oracles::random_points(rng, n, 2));
    const DiscreteMeasure beta = make_empirical(oracles::random_points(rng, m, 2));
    Eigen::VectorXd a = Eigen::VectorXd::Constant(n, 1.0 / n);
    Eigen::VectorXd b = Eigen::VectorXd::Constant(m, 1.0 / m);
    const TransportPlan plan = solve_exact(a, b, cost_matrix(alpha, beta));
    const Eigen::MatrixXd g = ot_support_grad(plan, alpha, beta, CostKind::Euclidean);
    double total = 0.0;
    for (int j = 0; j < m; ++j) total += g.row(j).norm();
    CHECK(total <= plan.coupling.sum() + 1e-12);
}

TEST_CASE("entropic support gradient matches finite differences of the re-solved loss") {
    Rng rng(29);
    const int n = 10;
    Eigen::MatrixXd src = oracles::random_points(rng, n, 2);
    Eigen::MatrixXd tgt = oracles::random_points(rng, n, 2).array() + 1.5;
    const DiscreteMeasure alpha = make_empirical(src);
    const Eigen::VectorXd a = alpha.weights;
    const Eigen::VectorXd b = Eigen::VectorXd::Constant(n, 1.0 / n);
    SolverConfig cfg;
    cfg.epsilon = 0.05;
    cfg.tol = 1e-12;
    cfg.max_iters = 200000;

    // Full entropic value <pi,C> + eps*KL(pi || a x b) at the solved plan.
    auto entropic_value = [&](const Eigen::MatrixXd& pts) {
        const DiscreteMeasure beta = make_empirical(pts);
        const CostMatrix c = cost_matrix(alpha, beta);
        const TransportPlan plan = sinkhorn(a, b, c, cfg);
        double value = (plan.coupling.array() * c.values.array()).sum();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double p = plan.coupling(i, j), q = a(i) * b(j);
                value += cfg.epsilon * (p > 0 ? p * std::log(p / q) - p + q : q);
            }
        return value;
    };

    const DiscreteMeasure beta = make_empirical(tgt);
    const TransportPlan plan = sinkhorn(a, b, cost_matrix(alpha, beta), cfg);
    const Eigen::MatrixXd grad = ot_support_grad(plan, alpha, beta, CostKind::Euclidean);

    const double h = 1e-5;
    for (int j = 0; j < 3; ++j) {  // a few coordinates keep the test fast
        for (int d = 0; d < 2; ++d) {
            Eigen::MatrixXd up = tgt, down = tgt;
            up(j, d) += h;
            down(j, d) -= h;
            const double fd = (entropic_value(up) - entropic_value(down)) / (2.0 * h);
            CHECK(std::abs(fd - grad(j, d)) <= 1e-3 * (1.0 + std::abs(fd)));
        }
    }
}

TEST_CASE("euler_flow with zero iterations returns only the initial snapshot") {
    const ContaminatedDataset ds = gen_flow_2d(15, 0.0, 3);
    FlowLossSpec spec;
    const FlowTrace trace = euler_flow(ds.target, ds.source, spec, 0.01, 0, 5, ds.target);
    CHECK(trace.snapshots.size() == 1);
    CHECK(trace.loss_series.empty());
    CHECK(trace.eval_series.size() == 1);
    CHECK((trace.snapshots[0] - ds.source.points).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exact-OT flow on clean data collapses the loss") {
    const ContaminatedDataset ds = gen_flow_2d(40, 0.0, 5);
    FlowLossSpec spec;  // exact, Euclidean
    const FlowTrace trace = euler_flow(ds.target, ds.source, spec, 0.01, 320, 40, ds.target);
    REQUIRE_FALSE(trace.failed);
    REQUIRE_FALSE(trace.loss_series.empty());
    CHECK(trace.loss_series.back() < 0.05 * trace.loss_series.front());
    CHECK(trace.eval_series.back() < 0.05 * trace.eval_series.front());
}

TEST_CASE("srot-hard flow starves the flagged fixed-side rows") {
    const ContaminatedDataset ds = gen_flow_2d(60, 0.1, 7);
    FlowLossSpec spec;
    spec.kind = FlowLossKind::SrotHard;
    spec.model = boundary_model(1.25);
    spec.alpha_assigned = Side::Target;  // fixed side carries the target label
    spec.beta_assigned = Side::Source;
    const FlowTrace trace = euler_flow(ds.target, ds.source, spec, 0.01, 60, 20, ds.clean_part(Side::Target));
    REQUIRE_FALSE(trace.failed);
    REQUIRE(trace.final_coupling.rows() == ds.target.size());
    for (Eigen::Index i = 0; i < ds.target.size(); ++i) {
        if (ds.target_outlier_truth[static_cast<std::size_t>(i)]) {
            CHECK(trace.final_coupling.row(i).cwiseAbs().maxCoeff() == 0.0);
        }
    }
    CHECK(trace.loss_series.back() < trace.loss_series.front());
}

TEST_CASE("compare_flows") {
    const ContaminatedDataset ds = gen_flow_2d(20, 0.0, 9);
    FlowLossSpec spec;
    const FlowTrace t1 = euler_flow(ds.target, ds.source, spec, 0.01, 10, 5, ds.target);

    SUBCASE("single trace yields a one-row report") {
        const FlowReport report = compare_flows({t1});
        REQUIRE(report.rows.size() == 1);
        CHECK(report.rows[0].rank == 1);
        CHECK(report.rows[0].final_loss == doctest::Approx(t1.loss_series.back()));
    }

    SUBCASE("mismatched references are rejected") {
        const ContaminatedDataset other = gen_flow_2d(20, 0.0, 10);
        const FlowTrace t2 = euler_flow(other.target, other.source, spec, 0.01, 10, 5, other.target);
        CHECK_THROWS_AS(compare_flows({t1, t2}), MismatchedReference);
    }

    SUBCASE("ranking orders by final eval") {
        const FlowTrace longer = euler_flow(ds.target, ds.source, spec, 0.01, 200, 50, ds.target);
        const FlowReport report = compare_flows({t1, longer});
        REQUIRE(report.rows.size() == 2);
        CHECK(report.rows[1].rank == 1);  // longer run got closer
        CHECK(report.rows[0].rank == 2);
    }
}

TEST_CASE("trace persistence layout") {
    namespace fs = std::filesystem;
    const ContaminatedDataset ds = gen_flow_2d(12, 0.0, 11);
    FlowLossSpec spec;
    const FlowTrace trace = euler_flow(ds.target, ds.source, spec, 0.01, 8, 4, ds.target);
    const std::string dir = (fs::temp_directory_path() / "srot_test_trace").string();
    fs::remove_all(dir);
    save_trace(trace, dir);
    CHECK(fs::exists(fs::path(dir) / "trace.csv"));
    CHECK(fs::exists(fs::path(dir) / "snapshots" / "snap_000000.csv"));
    CHECK(fs::exists(fs::path(dir) / "snapshots" / "snap_000008.csv"));
    std::ifstream in(fs::path(dir) / "trace.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration,loss,eval");
    fs::remove_all(dir);
}
