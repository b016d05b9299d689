#include "srot/labelprop.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "srot/error.hpp"
#include "srot/srot.hpp"

namespace srot {

std::string to_string(LabelPropMethod m) {
    switch (m) {
        case LabelPropMethod::Partial: return "partial";
        case LabelPropMethod::Truncated: return "truncated";
        case LabelPropMethod::SrotHardPartial: return "srot_hard_partial";
    }
    return "partial";
}

std::vector<int> propagate_labels(const TransportPlan& plan, const std::vector<int>& source_labels,
                                  const Eigen::VectorXd& b, double threshold_frac) {
    if (plan.coupling.cols() != b.size()) throw InvalidDataset("propagate_labels: column count mismatch");
    if (plan.coupling.rows() != static_cast<Eigen::Index>(source_labels.size())) {
        throw InvalidDataset("propagate_labels: source label count mismatch");
    }
    if (!(threshold_frac >= 0.0 && threshold_frac <= 1.0)) {
        throw InvalidDataset("propagate_labels: threshold_frac out of [0,1]");
    }
    std::vector<int> out(static_cast<std::size_t>(b.size()), kUnclassified);
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        double best = 0.0;
        Eigen::Index best_i = -1;
        for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i) {
            if (plan.coupling(i, j) > best) {  // strict: ties keep the lowest index
                best = plan.coupling(i, j);
                best_i = i;
            }
        }
        if (best_i >= 0 && best > 0.0 && best >= threshold_frac * b(j)) {
            out[static_cast<std::size_t>(j)] = source_labels[static_cast<std::size_t>(best_i)];
        }
    }
    return out;
}

AccuracyResult accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                        const std::vector<bool>& clean_mask) {
    if (pred.size() != truth.size() || pred.size() != clean_mask.size()) {
        throw InvalidDataset("accuracy: length mismatch");
    }
    long clean_total = 0, clean_correct = 0, classified = 0, classified_correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (clean_mask[i]) {
            ++clean_total;
            if (pred[i] != kUnclassified && pred[i] == truth[i]) ++clean_correct;
        }
        if (pred[i] != kUnclassified) {
            ++classified;
            if (pred[i] == truth[i]) ++classified_correct;
        }
    }
    AccuracyResult res;
    res.accuracy = clean_total > 0 ? static_cast<double>(clean_correct) / static_cast<double>(clean_total)
                                   : 0.0;
    res.n_classified = static_cast<int>(classified);
    if (classified > 0) {
        res.labeled_accuracy = static_cast<double>(classified_correct) / static_cast<double>(classified);
    }
    return res;
}

Eigen::MatrixXd barycentric_projection(const TransportPlan& plan, const Eigen::MatrixXd& source_points,
                                       std::vector<bool>* unprojected) {
    if (plan.coupling.rows() != source_points.rows()) {
        throw InvalidDataset("barycentric_projection: source point count mismatch");
    }
    const Eigen::Index m = plan.coupling.cols(), d = source_points.cols();
    Eigen::MatrixXd proj(m, d);
    if (unprojected) unprojected->assign(static_cast<std::size_t>(m), false);
    for (Eigen::Index j = 0; j < m; ++j) {
        const double col_mass = plan.coupling.col(j).sum();
        if (col_mass <= 0.0) {
            proj.row(j).setConstant(std::numeric_limits<double>::quiet_NaN());
            if (unprojected) (*unprojected)[static_cast<std::size_t>(j)] = true;
            continue;
        }
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
        for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i) {
            if (plan.coupling(i, j) > 0.0) acc += plan.coupling(i, j) * source_points.row(i);
        }
        proj.row(j) = acc / col_mass;
    }
    return proj;
}

LabeledContaminatedDataset make_labelprop_dataset(std::uint64_t seed) {
    Rng rng = Rng(seed).fork(0x1ab);
    const double sigma = 0.4;
    // Source domain clusters for classes 0/1, a far third class, and the
    // target domain shifted along the second axis.
    const Eigen::RowVector2d s0(0.0, 0.0), s1(3.0, 0.0), s2(18.0, -18.0);
    const Eigen::RowVector2d t0(0.0, 4.0), t1(3.0, 4.0);

    auto blob = [&](Eigen::MatrixXd& pts, Eigen::Index row, const Eigen::RowVector2d& c) {
        pts(row, 0) = c.x() + sigma * rng.normal();
        pts(row, 1) = c.y() + sigma * rng.normal();
    };

    const int n_src = 500, n_tgt = 500;
    Eigen::MatrixXd src(n_src, 2), tgt(n_tgt, 2);
    LabeledContaminatedDataset ds;
    ds.n_classes = 3;
    ds.source_labels.resize(n_src);
    ds.target_labels.resize(n_tgt);
    ds.data.source_outlier_truth.assign(n_src, false);
    ds.data.source_outlier_types.assign(n_src, OutlierType::Clean);
    ds.data.target_outlier_truth.assign(n_tgt, false);
    ds.data.target_outlier_types.assign(n_tgt, OutlierType::Clean);

    for (int i = 0; i < 200; ++i) {
        blob(src, i, s0);
        ds.source_labels[static_cast<std::size_t>(i)] = 0;
    }
    for (int i = 200; i < 400; ++i) {
        blob(src, i, s1);
        ds.source_labels[static_cast<std::size_t>(i)] = 1;
    }
    for (int i = 400; i < 500; ++i) {
        blob(src, i, s2);
        ds.source_labels[static_cast<std::size_t>(i)] = 2;
    }
    for (int i = 0; i < 200; ++i) {
        blob(tgt, i, t0);
        ds.target_labels[static_cast<std::size_t>(i)] = 0;
    }
    for (int i = 200; i < 400; ++i) {
        blob(tgt, i, t1);
        ds.target_labels[static_cast<std::size_t>(i)] = 1;
    }
    // Type-II target outliers: draws from the source-domain clusters with
    // their true class labels.
    for (int i = 400; i < 450; ++i) {
        blob(tgt, i, s0);
        ds.target_labels[static_cast<std::size_t>(i)] = 0;
        ds.data.target_outlier_truth[static_cast<std::size_t>(i)] = true;
        ds.data.target_outlier_types[static_cast<std::size_t>(i)] = OutlierType::TypeII;
    }
    for (int i = 450; i < 500; ++i) {
        blob(tgt, i, s1);
        ds.target_labels[static_cast<std::size_t>(i)] = 1;
        ds.data.target_outlier_truth[static_cast<std::size_t>(i)] = true;
        ds.data.target_outlier_types[static_cast<std::size_t>(i)] = OutlierType::TypeII;
    }

    ds.data.source = make_empirical(src, std::nullopt, "alpha");
    ds.data.target = make_empirical(tgt, std::nullopt, "beta");
    return ds;
}

namespace {

TransportPlan labelprop_plan(const LabeledContaminatedDataset& ds, LabelPropMethod method, double m,
                             const ClassifierModel* trained,
                             Eigen::VectorXd* b_out) {
    const DiscreteMeasure& src = ds.data.source;
    const DiscreteMeasure& tgt = ds.data.target;
    const CostMatrix c = cost_matrix(src, tgt, CostKind::Euclidean);
    *b_out = tgt.weights;
    switch (method) {
        case LabelPropMethod::Partial:
            return partial_ot(src.weights, tgt.weights, c, m * std::min(src.total_mass(), tgt.total_mass()));
        case LabelPropMethod::Truncated: {
            // Same trimming level as the partial run, expressed through the
            // cost quantile.
            return rot(src.weights, tgt.weights, c, std::min(0.499, (1.0 - m) / 2.0), RotMode::Truncated);
        }
        case LabelPropMethod::SrotHardPartial: {
            SrotConfig sc;
            sc.base_solver = BaseSolver::Partial;
            sc.partial_mass = m;  // fraction of the reweighted unit masses
            SrotResult res = srot_hard(src, tgt, *trained, sc);
            *b_out = res.b_used;
            return res.plan;
        }
    }
    throw SolverFailure("labelprop_plan: unknown method");
}

}  // namespace

LabelPropReport run_labelprop_experiment(const LabeledContaminatedDataset& dataset,
                                         const std::vector<LabelPropMethod>& methods,
                                         const std::vector<double>& mass_grid,
                                         const LabelPropConfig& config) {
    LabelPropReport report;
    if (methods.empty() || mass_grid.empty()) return report;

    std::optional<ClassifierModel> trained;
    for (LabelPropMethod method : methods) {
        if (method == LabelPropMethod::SrotHardPartial && !trained) {
            std::vector<int> dims = config.hidden;
            dims.insert(dims.begin(), static_cast<int>(dataset.data.source.dim()));
            dims.push_back(2);
            const ClassifierModel init = init_model(dims, config.train.seed, config.activation);
            trained = train(init, dataset.data, config.train).model;
        }
    }

    std::vector<bool> clean_mask(dataset.target_labels.size());
    for (std::size_t i = 0; i < clean_mask.size(); ++i) {
        clean_mask[i] = !dataset.data.target_outlier_truth[i];
    }

    for (LabelPropMethod method : methods) {
        for (double m : mass_grid) {
            Eigen::VectorXd b;
            const TransportPlan plan = labelprop_plan(dataset, method, m,
                                                      trained ? &*trained : nullptr, &b);
            const std::vector<int> pred =
                propagate_labels(plan, dataset.source_labels, b, config.threshold_frac);
            const AccuracyResult acc = accuracy(pred, dataset.target_labels, clean_mask);
            report.rows.push_back({method, m, acc.accuracy, acc.labeled_accuracy, acc.n_classified});
        }
    }
    return report;
}

void save_labelprop_report_csv(const LabelPropReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_labelprop_report_csv: cannot open " + path);
    out << "method,m,accuracy,labeled_accuracy,n_classified\n";
    out.precision(17);
    for (const auto& row : report.rows) {
        out << to_string(row.method) << "," << row.m << "," << row.accuracy << ",";
        if (row.labeled_accuracy) out << *row.labeled_accuracy;
        else out << "undefined";
        out << "," << row.n_classified << "\n";
    }
}

}  // namespace srot
