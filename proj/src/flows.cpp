#include "srot/flows.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "srot/error.hpp"

namespace srot {

namespace {

namespace fs = std::filesystem;

double exact_eval(const DiscreteMeasure& clean, const Eigen::MatrixXd& support) {
    const DiscreteMeasure current = make_empirical(support);
    const CostMatrix c = cost_matrix(clean, current, CostKind::Euclidean);
    return solve_exact(clean.weights, current.weights, c).objective;
}

}  // namespace

std::string to_string(FlowLossKind k) {
    switch (k) {
        case FlowLossKind::Exact: return "wasserstein";
        case FlowLossKind::Sinkhorn: return "sinkhorn";
        case FlowLossKind::Uot: return "uot";
        case FlowLossKind::Partial: return "partial";
        case FlowLossKind::SrotHard: return "srot_hard";
        case FlowLossKind::SrotSoft: return "srot_soft";
    }
    return "wasserstein";
}

std::string FlowLossSpec::name() const { return to_string(kind); }

Eigen::MatrixXd ot_support_grad(const TransportPlan& plan, const DiscreteMeasure& source,
                                const DiscreteMeasure& target, CostKind cost_kind) {
    if (cost_kind != CostKind::Euclidean && cost_kind != CostKind::SquaredEuclidean) {
        throw UnsupportedCost("ot_support_grad: gradient defined for Euclidean kinds only");
    }
    if (plan.coupling.rows() != source.size() || plan.coupling.cols() != target.size()) {
        throw SolverFailure("ot_support_grad: plan does not match measures");
    }
    const Eigen::Index m = target.size(), d = target.dim();
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(m, d);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < source.size(); ++i) {
            const double p = plan.coupling(i, j);
            if (p <= 0.0) continue;
            Eigen::RowVectorXd diff = target.points.row(j) - source.points.row(i);
            if (cost_kind == CostKind::SquaredEuclidean) {
                grad.row(j) += 2.0 * p * diff;
            } else {
                const double nrm = diff.norm();
                if (nrm > 1e-300) grad.row(j) += (p / nrm) * diff;
            }
        }
    }
    return grad;
}

FlowTrace euler_flow(const DiscreteMeasure& alpha, const DiscreteMeasure& beta0,
                     const FlowLossSpec& spec, double lr, int iters, int log_every,
                     const std::optional<DiscreteMeasure>& alpha_clean) {
    if (!(lr > 0.0)) throw SolverFailure("euler_flow: lr must be positive");
    if (iters < 0 || log_every < 1) throw SolverFailure("euler_flow: bad iteration counts");
    if (alpha.dim() != beta0.dim()) throw SolverFailure("euler_flow: dimension mismatch");
    const bool is_srot = spec.kind == FlowLossKind::SrotHard || spec.kind == FlowLossKind::SrotSoft;
    if (is_srot && !spec.model) throw InvalidDataset("euler_flow: srot loss needs a trained classifier");

    FlowTrace trace;
    trace.lr = lr;
    trace.iters = iters;
    trace.log_every = log_every;
    trace.loss_name = spec.name();
    trace.alpha_clean = alpha_clean;

    DiscreteMeasure beta = beta0;
    const Eigen::Index n_beta = beta.size();

    // Frozen per-flow state for the SROT losses.
    Eigen::VectorXd a_used = alpha.weights, b_used = beta.weights;
    Eigen::VectorXd alpha_terms, beta_terms;
    double srot_mass = 1.0;
    if (is_srot) {
        const OutlierMask mask_a = detect_outliers(*spec.model, alpha, spec.alpha_assigned);
        const OutlierMask mask_b = detect_outliers(*spec.model, beta, spec.beta_assigned);
        const double frac_a =
            static_cast<double>(mask_a.n_flagged()) / static_cast<double>(alpha.size());
        const double frac_b = static_cast<double>(mask_b.n_flagged()) / static_cast<double>(n_beta);
        if (spec.kind == FlowLossKind::SrotHard) {
            a_used = hard_weights(mask_a, alpha.size());
            b_used = hard_weights(mask_b, n_beta);
        } else {
            const CostMatrix euclid0 = cost_matrix(alpha, beta, CostKind::Euclidean);
            const double gamma = spec.srot.gamma.value_or(default_gamma(euclid0));
            alpha_terms = soft_cost_terms(alpha, spec.alpha_assigned, *spec.model, gamma,
                                          spec.srot.ce_floor);
            beta_terms = soft_cost_terms(beta, spec.beta_assigned, *spec.model, gamma,
                                         spec.srot.ce_floor);
            srot_mass = spec.srot.partial_mass.value_or(1.0 - std::max(frac_a, frac_b));
            if (spec.srot.rescale) {
                if (frac_a <= frac_b) a_used *= srot_mass / a_used.sum();
                else b_used *= srot_mass / b_used.sum();
            }
        }
    }

    auto solve_current = [&]() -> TransportPlan {
        CostMatrix c = cost_matrix(alpha, beta, spec.ground_cost);
        switch (spec.kind) {
            case FlowLossKind::Exact:
                return solve_exact(a_used, b_used, c);
            case FlowLossKind::Sinkhorn:
                return sinkhorn(a_used, b_used, c, spec.solver);
            case FlowLossKind::Uot:
                return sinkhorn_unbalanced(a_used, b_used, c, spec.solver);
            case FlowLossKind::Partial:
                return partial_ot(a_used, b_used, c,
                                  std::min({spec.partial_mass, a_used.sum(), b_used.sum()}));
            case FlowLossKind::SrotHard: {
                TransportPlan plan = solve_exact(a_used, b_used, c);
                plan.solver = SolverTag::SrotHard;
                return plan;
            }
            case FlowLossKind::SrotSoft: {
                for (Eigen::Index i = 0; i < c.rows(); ++i)
                    for (Eigen::Index j = 0; j < c.cols(); ++j)
                        c.values(i, j) += alpha_terms(i) + beta_terms(j);
                c.kind = CostKind::SrotSoft;
                TransportPlan plan =
                    partial_ot(a_used, b_used, c, std::min({srot_mass, a_used.sum(), b_used.sum()}));
                plan.solver = SolverTag::SrotSoft;
                return plan;
            }
        }
        throw SolverFailure("euler_flow: unknown loss kind");
    };

    auto log_state = [&](int iteration) {
        trace.snapshots.push_back(beta.points);
        trace.snapshot_iterations.push_back(iteration);
        if (alpha_clean) {
            trace.eval_series.push_back(exact_eval(*alpha_clean, beta.points));
            trace.eval_iterations.push_back(iteration);
        }
    };

    log_state(0);
    for (int t = 0; t < iters; ++t) {
        try {
            if (spec.redetect_every > 0 && t > 0 && t % spec.redetect_every == 0 && is_srot) {
                const OutlierMask mask_b = detect_outliers(*spec.model, beta, spec.beta_assigned);
                if (spec.kind == FlowLossKind::SrotHard) {
                    b_used = hard_weights(mask_b, n_beta);
                } else {
                    const double gamma =
                        spec.srot.gamma.value_or(default_gamma(cost_matrix(alpha, beta, CostKind::Euclidean)));
                    beta_terms =
                        soft_cost_terms(beta, spec.beta_assigned, *spec.model, gamma, spec.srot.ce_floor);
                }
            }
            TransportPlan plan = solve_current();
            trace.loss_series.push_back(plan.objective);
            const Eigen::MatrixXd grad =
                ot_support_grad(plan, alpha, beta, spec.ground_cost == CostKind::SquaredEuclidean
                                                       ? CostKind::SquaredEuclidean
                                                       : CostKind::Euclidean);
            beta.points -= lr * static_cast<double>(n_beta) * grad;
            if (t + 1 == iters) trace.final_coupling = plan.coupling;
        } catch (const Error&) {
            trace.failed = true;
            trace.failed_at = t;
            break;
        }
        if ((t + 1) % log_every == 0 || t + 1 == iters) log_state(t + 1);
    }
    return trace;
}

FlowReport compare_flows(const std::vector<FlowTrace>& traces) {
    FlowReport report;
    if (traces.empty()) return report;
    const FlowTrace& ref = traces.front();
    for (const auto& t : traces) {
        const bool both = t.alpha_clean.has_value() && ref.alpha_clean.has_value();
        if (t.alpha_clean.has_value() != ref.alpha_clean.has_value()) {
            throw MismatchedReference("compare_flows: traces disagree on having a clean reference");
        }
        if (both) {
            const auto& a = ref.alpha_clean->points;
            const auto& b = t.alpha_clean->points;
            if (a.rows() != b.rows() || a.cols() != b.cols() ||
                (a - b).cwiseAbs().maxCoeff() > 1e-12) {
                throw MismatchedReference("compare_flows: traces use different clean references");
            }
        }
    }
    for (const auto& t : traces) {
        FlowReportRow row;
        row.name = t.loss_name;
        row.final_loss = t.loss_series.empty() ? std::numeric_limits<double>::quiet_NaN()
                                               : t.loss_series.back();
        row.final_eval = t.eval_series.empty() ? std::numeric_limits<double>::quiet_NaN()
                                               : t.eval_series.back();
        row.rank = 0;
        report.rows.push_back(row);
    }
    std::vector<std::size_t> idx(report.rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return report.rows[a].final_eval < report.rows[b].final_eval;
    });
    for (std::size_t r = 0; r < idx.size(); ++r) report.rows[idx[r]].rank = static_cast<int>(r) + 1;
    return report;
}

void save_trace(const FlowTrace& trace, const std::string& dir) {
    fs::create_directories(dir);
    fs::create_directories(fs::path(dir) / "snapshots");
    std::ofstream out(fs::path(dir) / "trace.csv");
    if (!out) throw IoError("save_trace: cannot open trace.csv under " + dir);
    out << "iteration,loss,eval\n";
    out.precision(17);
    const int last = trace.loss_series.empty() ? 0 : static_cast<int>(trace.loss_series.size());
    for (int t = 0; t <= last; ++t) {
        out << t << ",";
        if (t < last) out << trace.loss_series[static_cast<std::size_t>(t)];
        out << ",";
        for (std::size_t k = 0; k < trace.eval_iterations.size(); ++k) {
            if (trace.eval_iterations[k] == t) {
                out << trace.eval_series[k];
                break;
            }
        }
        out << "\n";
    }
    for (std::size_t s = 0; s < trace.snapshots.size(); ++s) {
        std::ostringstream name;
        name << "snap_" << std::setw(6) << std::setfill('0') << trace.snapshot_iterations[s] << ".csv";
        std::ofstream snap(fs::path(dir) / "snapshots" / name.str());
        snap.precision(17);
        const auto& pts = trace.snapshots[s];
        for (Eigen::Index j = 0; j < pts.cols(); ++j) snap << (j ? "," : "") << "x" << j;
        snap << "\n";
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            for (Eigen::Index j = 0; j < pts.cols(); ++j) snap << (j ? "," : "") << pts(i, j);
            snap << "\n";
        }
    }
}

void save_flow_report_csv(const FlowReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_flow_report_csv: cannot open " + path);
    out << "method,final_loss,final_eval,rank\n";
    out.precision(17);
    for (const auto& row : report.rows) {
        out << row.name << "," << row.final_loss << "," << row.final_eval << "," << row.rank << "\n";
    }
}

}  // namespace srot
