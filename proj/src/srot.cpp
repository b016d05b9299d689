#include "srot/srot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "srot/error.hpp"

namespace srot {

namespace {

// -log p(other side): the cross-entropy of the opposite side's one-hot
// label against the prediction.
Eigen::VectorXd ce_vs_opposite(const ClassifierModel& model, const DiscreteMeasure& m, Side assigned) {
    const Eigen::MatrixXd probs = forward(model, m.points);
    const Eigen::Index opp_col = assigned == Side::Source ? 1 : 0;
    Eigen::VectorXd ce(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        ce(i) = -std::log(std::max(probs(i, opp_col), 1e-300));
    }
    return ce;
}

TransportPlan run_base(BaseSolver base, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const CostMatrix& c, const SrotConfig& cfg, double auto_mass) {
    switch (base) {
        case BaseSolver::Exact:
            return solve_exact(a, b, c);
        case BaseSolver::Sinkhorn:
            return sinkhorn(a, b, c, cfg.solver_config);
        case BaseSolver::Uot:
            return sinkhorn_unbalanced(a, b, c, cfg.solver_config);
        case BaseSolver::Partial: {
            const double cap = std::min(a.sum(), b.sum());
            const double m = std::min(cfg.partial_mass.value_or(auto_mass), cap);
            return partial_ot(a, b, c, m);
        }
        case BaseSolver::Truncated: {
            double lambda = cfg.truncation_lambda;
            if (!(lambda > 0.0)) {
                std::vector<double> entries(c.values.data(), c.values.data() + c.values.size());
                std::nth_element(entries.begin(), entries.begin() + entries.size() / 2, entries.end());
                lambda = std::max(entries[entries.size() / 2], 1e-300);
            }
            return truncated_ot(a, b, c, lambda);
        }
    }
    throw SolverFailure("run_base: unknown solver");
}

}  // namespace

std::string to_string(BaseSolver b) {
    switch (b) {
        case BaseSolver::Exact: return "exact";
        case BaseSolver::Sinkhorn: return "sinkhorn";
        case BaseSolver::Uot: return "uot";
        case BaseSolver::Partial: return "partial";
        case BaseSolver::Truncated: return "truncated";
    }
    return "exact";
}

OutlierMask detect_outliers(const ClassifierModel& model, const DiscreteMeasure& measure,
                            Side assigned_side) {
    if (measure.dim() != model.input_dim()) throw InvalidDataset("detect_outliers: input dim mismatch");
    std::vector<Side> assigned(static_cast<std::size_t>(measure.size()), assigned_side);
    const SidePrediction pred = predict_side(model, measure.points, &assigned);
    OutlierMask mask;
    mask.side = assigned_side;
    mask.flags.resize(pred.sides.size());
    mask.confidences = pred.confidence;
    for (std::size_t i = 0; i < pred.sides.size(); ++i) mask.flags[i] = pred.sides[i] != assigned_side;
    return mask;
}

Eigen::VectorXd hard_weights(const OutlierMask& mask, Eigen::Index n) {
    if (static_cast<Eigen::Index>(mask.flags.size()) != n) {
        throw InvalidWeights("hard_weights: mask length mismatch");
    }
    Eigen::Index kept = 0;
    for (bool f : mask.flags) kept += !f;
    if (kept == 0) throw EmptyMeasure("hard_weights: every sample flagged");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!mask.flags[static_cast<std::size_t>(i)]) w(i) = 1.0 / static_cast<double>(kept);
    }
    return w;
}

Eigen::VectorXd soft_cost_terms(const DiscreteMeasure& measure, Side assigned_side,
                                const ClassifierModel& model, double gamma, double ce_floor) {
    if (!(gamma > 0.0)) throw InvalidGamma("soft_cost_terms: gamma must be positive");
    if (!(ce_floor > 0.0)) throw InvalidGamma("soft_cost_terms: ce_floor must be positive");
    const Eigen::VectorXd ce = ce_vs_opposite(model, measure, assigned_side);
    Eigen::VectorXd terms(ce.size());
    for (Eigen::Index i = 0; i < ce.size(); ++i) terms(i) = gamma / std::max(ce(i), ce_floor);
    return terms;
}

CostMatrix soft_cost_sided(const DiscreteMeasure& first, Side first_side,
                           const DiscreteMeasure& second, Side second_side,
                           const ClassifierModel& model, double gamma, double ce_floor) {
    if (first_side == second_side) throw InvalidDataset("soft_cost: sides must differ");
    CostMatrix c = cost_matrix(first, second, CostKind::Euclidean);
    const Eigen::VectorXd row_terms = soft_cost_terms(first, first_side, model, gamma, ce_floor);
    const Eigen::VectorXd col_terms = soft_cost_terms(second, second_side, model, gamma, ce_floor);
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        for (Eigen::Index j = 0; j < c.cols(); ++j) {
            c.values(i, j) += row_terms(i) + col_terms(j);
        }
    }
    c.kind = CostKind::SrotSoft;
    c.param = gamma;
    return c;
}

CostMatrix soft_cost(const DiscreteMeasure& source, const DiscreteMeasure& target,
                     const ClassifierModel& model, double gamma, double ce_floor) {
    return soft_cost_sided(source, Side::Source, target, Side::Target, model, gamma, ce_floor);
}

double default_gamma(const CostMatrix& c_euclid) {
    if (c_euclid.values.size() == 0) throw InvalidGamma("default_gamma: empty cost matrix");
    const double g = c_euclid.values.maxCoeff();
    if (!(g > 0.0)) throw InvalidGamma("default_gamma: all costs are zero");
    return g;
}

SrotResult srot_hard_sided(const DiscreteMeasure& first, Side first_side,
                           const DiscreteMeasure& second, Side second_side,
                           const ClassifierModel& model, const SrotConfig& config) {
    SrotResult res;
    res.source_mask = detect_outliers(model, first, first_side);
    res.target_mask = detect_outliers(model, second, second_side);
    res.a_used = hard_weights(res.source_mask, first.size());
    res.b_used = hard_weights(res.target_mask, second.size());
    res.cost_used = cost_matrix(first, second, CostKind::Euclidean);

    const double flagged_frac =
        std::max(static_cast<double>(res.source_mask.n_flagged()) / static_cast<double>(first.size()),
                 static_cast<double>(res.target_mask.n_flagged()) / static_cast<double>(second.size()));
    res.plan = run_base(config.base_solver, res.a_used, res.b_used, res.cost_used, config,
                        1.0 - flagged_frac);
    res.plan.solver = SolverTag::SrotHard;
    return res;
}

SrotResult srot_hard(const DiscreteMeasure& source, const DiscreteMeasure& target,
                     const ClassifierModel& model, const SrotConfig& config) {
    return srot_hard_sided(source, Side::Source, target, Side::Target, model, config);
}

SrotResult srot_soft_sided(const DiscreteMeasure& first, Side first_side,
                           const DiscreteMeasure& second, Side second_side,
                           const ClassifierModel& model, const SrotConfig& config) {
    SrotResult res;
    res.source_mask = detect_outliers(model, first, first_side);
    res.target_mask = detect_outliers(model, second, second_side);

    const CostMatrix euclid = cost_matrix(first, second, CostKind::Euclidean);
    const double gamma = config.gamma.value_or(default_gamma(euclid));
    res.cost_used = soft_cost_sided(first, first_side, second, second_side, model, gamma,
                                    config.ce_floor);

    const double frac_first =
        static_cast<double>(res.source_mask.n_flagged()) / static_cast<double>(first.size());
    const double frac_second =
        static_cast<double>(res.target_mask.n_flagged()) / static_cast<double>(second.size());
    const double detected_frac = std::max(frac_first, frac_second);
    const double mass = config.partial_mass.value_or(1.0 - detected_frac);

    res.a_used = first.weights;
    res.b_used = second.weights;
    if (config.rescale) {
        // Scale the cleaner side down to the transported mass so the
        // partial solve saturates it completely.
        const double sa = res.a_used.sum(), sb = res.b_used.sum();
        if (frac_first <= frac_second) {
            if (sa > 0.0) res.a_used *= mass / sa;
        } else {
            if (sb > 0.0) res.b_used *= mass / sb;
        }
    }

    SrotConfig run_cfg = config;
    if (!run_cfg.partial_mass) run_cfg.partial_mass = std::min({mass, res.a_used.sum(), res.b_used.sum()});
    res.plan = run_base(config.base_solver, res.a_used, res.b_used, res.cost_used, run_cfg, mass);
    res.plan.solver = SolverTag::SrotSoft;
    return res;
}

SrotResult srot_soft(const DiscreteMeasure& source, const DiscreteMeasure& target,
                     const ClassifierModel& model, const SrotConfig& config) {
    return srot_soft_sided(source, Side::Source, target, Side::Target, model, config);
}

void save_mask_csv(const OutlierMask& mask, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_mask_csv: cannot open " + path);
    out << "index,flag,confidence,side\n";
    out.precision(17);
    for (std::size_t i = 0; i < mask.flags.size(); ++i) {
        out << i << "," << (mask.flags[i] ? 1 : 0) << "," << mask.confidences(static_cast<Eigen::Index>(i))
            << "," << to_string(mask.side) << "\n";
    }
}

}  // namespace srot
