#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "srot/error.hpp"
#include "srot/measures.hpp"
#include "srot/srot.hpp"

using namespace srot;

namespace {

// Hard-wired linear classifier with the decision boundary at x = split:
// points to the left are "source", to the right "target". Confidence is
// controlled by the slope.
ClassifierModel boundary_model(double split, double slope = 20.0) {
    ClassifierModel model = init_model({2, 2}, 0);
    model.weights[0] << -slope, 0.0, slope, 0.0;
    model.biases[0] << slope * split, -slope * split;
    return model;
}

// Predicts exactly 0.5/0.5 everywhere; ties resolve to the assigned side,
// so nothing is ever flagged.
ClassifierModel indifferent_model() {
    ClassifierModel model = init_model({2, 2}, 0);
    model.weights[0].setZero();
    model.biases[0].setZero();
    return model;
}

}  // namespace

TEST_CASE("detect_outliers applies the label-disagreement rule") {
    const ContaminatedDataset ds = gen_toy_2d(40, 0, 3, 2);
    const ClassifierModel model = boundary_model(0.75);

    const OutlierMask src_mask = detect_outliers(model, ds.source, Side::Source);
    CHECK(src_mask.n_flagged() == 0);  // all clean source points sit left of the boundary

    const OutlierMask tgt_mask = detect_outliers(model, ds.target, Side::Target);
    // The three type-II outliers live in the source blob, left of the boundary.
    for (Eigen::Index i = 0; i < ds.target.size(); ++i) {
        CHECK(tgt_mask.flags[static_cast<std::size_t>(i)] ==
              ds.target_outlier_truth[static_cast<std::size_t>(i)]);
    }
    CHECK(tgt_mask.side == Side::Target);

    const OutlierMask none = detect_outliers(indifferent_model(), ds.target, Side::Target);
    CHECK(none.n_flagged() == 0);
}

TEST_CASE("hard_weights") {
    OutlierMask mask;
    mask.flags = {true, false, false, false};
    mask.confidences = Eigen::VectorXd::Ones(4);
    const Eigen::VectorXd w = hard_weights(mask, 4);
    CHECK(w(0) == 0.0);
    for (int i = 1; i < 4; ++i) CHECK(w(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));

    mask.flags = {false, false, false, false};
    const Eigen::VectorXd uniform = hard_weights(mask, 4);
    for (int i = 0; i < 4; ++i) CHECK(uniform(i) == doctest::Approx(0.25));

    mask.flags = {true, true, true, true};
    CHECK_THROWS_AS(hard_weights(mask, 4), EmptyMeasure);
}

TEST_CASE("soft_cost limits and homogeneity") {
    const ContaminatedDataset ds = gen_toy_2d(20, 0, 2, 4);
    const ClassifierModel model = boundary_model(0.75, 40.0);  // very confident
    const CostMatrix euclid = cost_matrix(ds.source, ds.target);
    const double gamma = 2.0;
    const CostMatrix soft = soft_cost(ds.source, ds.target, model, gamma);

    CHECK(soft.kind == CostKind::SrotSoft);
    CHECK(soft.param == gamma);
    CHECK(((soft.values - euclid.values).array() >= -1e-12).all());

    // Clean columns: CE against the opposite label is large, the extra term
    // nearly vanishes and the entry stays near-Euclidean.
    for (Eigen::Index j = 0; j < 5; ++j) {
        CHECK(soft.values(0, j) - euclid.values(0, j) <= 0.5);
    }
    // Flagged target columns (type-II sitting in the source blob): the
    // floored CE makes the extra term gamma/ce_floor, dominating every row.
    for (Eigen::Index j = 0; j < ds.target.size(); ++j) {
        if (!ds.target_outlier_truth[static_cast<std::size_t>(j)]) continue;
        CHECK(soft.values(0, j) >= gamma / 1e-6 * 0.5);
    }

    // (entry - euclidean) is linear in gamma.
    const CostMatrix soft2 = soft_cost(ds.source, ds.target, model, 2.0 * gamma);
    const Eigen::MatrixXd extra1 = soft.values - euclid.values;
    const Eigen::MatrixXd extra2 = soft2.values - euclid.values;
    CHECK((extra2 - 2.0 * extra1).cwiseAbs().maxCoeff() <= 1e-9 * extra1.maxCoeff());

    CHECK_THROWS_AS(soft_cost(ds.source, ds.target, model, -1.0), InvalidGamma);
}

TEST_CASE("default_gamma") {
    Eigen::MatrixXd pts(2, 2), other(2, 2);
    pts << 0, 0, 1, 0;
    other << 0, 0, 4, 3;
    const CostMatrix c = cost_matrix(make_empirical(pts), make_empirical(other));
    CHECK(default_gamma(c) == doctest::Approx(5.0));

    CostMatrix zero;
    zero.values = Eigen::MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS(default_gamma(zero), InvalidGamma);
}

TEST_CASE("soft cost with auto gamma prices outlier rows above clean rows") {
    const ContaminatedDataset ds = gen_toy_2d(40, 0, 4, 6);
    const ClassifierModel model = boundary_model(0.75, 40.0);
    const CostMatrix euclid = cost_matrix(ds.target, ds.source);
    const CostMatrix soft =
        soft_cost_sided(ds.target, Side::Target, ds.source, Side::Source, model, default_gamma(euclid));
    double min_outlier_row = 1e300, max_clean_row = 0.0;
    for (Eigen::Index i = 0; i < ds.target.size(); ++i) {
        const double row_min = soft.values.row(i).minCoeff();
        const double row_max = soft.values.row(i).maxCoeff();
        if (ds.target_outlier_truth[static_cast<std::size_t>(i)]) {
            min_outlier_row = std::min(min_outlier_row, row_min);
        } else {
            max_clean_row = std::max(max_clean_row, row_max);
        }
    }
    CHECK(min_outlier_row > max_clean_row);
}

TEST_CASE("srot_hard recovery: no detections reproduces the base plan bit-for-bit") {
    const ContaminatedDataset ds = gen_toy_2d(15, 0, 0, 11);
    SrotConfig cfg;  // base exact
    const SrotResult res = srot_hard(ds.source, ds.target, indifferent_model(), cfg);
    const TransportPlan base =
        solve_exact(ds.source.weights, ds.target.weights, cost_matrix(ds.source, ds.target));
    CHECK(res.source_mask.n_flagged() == 0);
    CHECK(res.target_mask.n_flagged() == 0);
    CHECK((res.plan.coupling - base.coupling).cwiseAbs().maxCoeff() == 0.0);
    CHECK(res.plan.objective == base.objective);
}

TEST_CASE("srot_hard zeroes out detected rows and columns") {
    const ContaminatedDataset ds = gen_toy_2d(30, 0, 3, 13);
    SrotConfig cfg;
    const SrotResult res = srot_hard(ds.source, ds.target, boundary_model(0.75), cfg);
    CHECK(res.plan.converged);
    for (Eigen::Index j = 0; j < ds.target.size(); ++j) {
        if (ds.target_outlier_truth[static_cast<std::size_t>(j)]) {
            CHECK(res.plan.col_marginals(j) == 0.0);
        } else {
            CHECK(res.plan.col_marginals(j) > 0.0);
        }
    }
    CHECK(res.plan.transported_mass() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("srot_soft leaves detected outliers untransported under a partial base") {
    const ContaminatedDataset ds = gen_toy_2d(30, 0, 3, 17);
    SrotConfig cfg;
    cfg.base_solver = BaseSolver::Partial;  // mass defaults to 1 - detected fraction
    const SrotResult res = srot_soft(ds.source, ds.target, boundary_model(0.75, 40.0), cfg);
    CHECK(res.plan.converged);
    double flagged_mass = 0.0;
    for (Eigen::Index j = 0; j < ds.target.size(); ++j) {
        if (res.target_mask.flags[static_cast<std::size_t>(j)]) flagged_mass += res.plan.col_marginals(j);
    }
    CHECK(flagged_mass <= 1e-9);
    const double expected_mass = 1.0 - 3.0 / 33.0;
    CHECK(res.plan.transported_mass() == doctest::Approx(expected_mass).epsilon(1e-7));
}

TEST_CASE("srot_soft with zero detections stays near the base plan") {
    const ContaminatedDataset ds = gen_toy_2d(12, 0, 0, 19);
    SrotConfig cfg;
    cfg.base_solver = BaseSolver::Partial;
    cfg.gamma = 1.0;
    const SrotResult res = srot_soft(ds.source, ds.target, boundary_model(0.75, 40.0), cfg);
    CHECK(res.source_mask.n_flagged() == 0);
    CHECK(res.target_mask.n_flagged() == 0);
    // Mass defaults to 1 with nothing detected; plan marginals match the
    // full solve.
    CHECK(res.plan.transported_mass() == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("monotone suppression: smaller tau never transports more flagged mass") {
    const ContaminatedDataset ds = gen_toy_2d(25, 0, 3, 23);
    const ClassifierModel model = boundary_model(0.75, 40.0);
    double prev_mass = 0.0;
    bool first = true;
    for (double tau : {0.02, 0.05, 0.1, 0.5, 1.0, 5.0}) {  // ascending
        SrotConfig cfg;
        cfg.base_solver = BaseSolver::Uot;
        cfg.solver_config.epsilon = 0.01;
        cfg.solver_config.tau = tau;
        const SrotResult res = srot_soft(ds.source, ds.target, model, cfg);
        double flagged_mass = 0.0;
        for (Eigen::Index j = 0; j < ds.target.size(); ++j) {
            if (res.target_mask.flags[static_cast<std::size_t>(j)])
                flagged_mass += res.plan.col_marginals(j);
        }
        if (!first) CHECK(prev_mass <= flagged_mass + 1e-6);
        prev_mass = flagged_mass;
        first = false;
    }
}

TEST_CASE("mask csv output") {
    namespace fs = std::filesystem;
    OutlierMask mask;
    mask.flags = {true, false};
    mask.confidences = Eigen::Vector2d(0.9, 0.6);
    mask.side = Side::Target;
    const std::string path = (fs::temp_directory_path() / "srot_test_mask.csv").string();
    save_mask_csv(mask, path);
    std::ifstream in(path);
    std::string header, row0;
    std::getline(in, header);
    std::getline(in, row0);
    CHECK(header == "index,flag,confidence,side");
    CHECK(row0.rfind("0,1,", 0) == 0);
    std::remove(path.c_str());
}
