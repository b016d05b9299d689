#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "srot/classifier.hpp"
#include "srot/measures.hpp"
#include "srot/solvers.hpp"

namespace srot {

struct OutlierMask {
    std::vector<bool> flags;       // true = detected outlier
    Eigen::VectorXd confidences;   // probability of the predicted side
    Side side = Side::Source;

    int n_flagged() const {
        int c = 0;
        for (bool f : flags) c += f;
        return c;
    }
};

enum class BaseSolver { Exact, Sinkhorn, Uot, Partial, Truncated };

std::string to_string(BaseSolver b);

struct SrotConfig {
    std::optional<double> gamma;         // empty = auto (largest Euclidean cost)
    bool rescale = false;                // Appendix-style mass rescaling before a partial solve
    BaseSolver base_solver = BaseSolver::Exact;
    SolverConfig solver_config;
    std::optional<double> partial_mass;  // empty = 1 - detected outlier fraction
    double truncation_lambda = 0.0;      // 0 = median of the cost entries
    double ce_floor = 1e-6;              // caps the inverse-CE terms at gamma/ce_floor
};

// A sample is an outlier when the classifier assigns it to the other side.
OutlierMask detect_outliers(const ClassifierModel& model, const DiscreteMeasure& measure,
                            Side assigned_side);

// Flagged samples get zero weight, the rest split the unit mass evenly.
Eigen::VectorXd hard_weights(const OutlierMask& mask, Eigen::Index n);

// Euclidean distance plus inverse cross-entropy penalties: a sample that
// the classifier places on the opposite side of its assignment becomes
// expensive to transport. The CE of each side is taken against the other
// side's label, floored at ce_floor.
CostMatrix soft_cost(const DiscreteMeasure& source, const DiscreteMeasure& target,
                     const ClassifierModel& model, double gamma, double ce_floor = 1e-6);

// The per-sample penalty gamma / max(CE(other label, f(x)), ce_floor); the
// flow integrator freezes these at flow start and adds them to a fresh
// Euclidean matrix every iteration.
Eigen::VectorXd soft_cost_terms(const DiscreteMeasure& measure, Side assigned_side,
                                const ClassifierModel& model, double gamma, double ce_floor = 1e-6);
// Same, with explicit side labels (the gradient-flow experiments feed the
// fixed measure in as the first argument with a target assignment).
CostMatrix soft_cost_sided(const DiscreteMeasure& first, Side first_side,
                           const DiscreteMeasure& second, Side second_side,
                           const ClassifierModel& model, double gamma, double ce_floor = 1e-6);

// Largest pairwise Euclidean cost; the documented default for gamma.
double default_gamma(const CostMatrix& c_euclid);

struct SrotResult {
    TransportPlan plan;
    OutlierMask source_mask;
    OutlierMask target_mask;
    Eigen::VectorXd a_used;  // weights handed to the base solver
    Eigen::VectorXd b_used;
    CostMatrix cost_used;
};

// Hard weighting: detect on both sides, zero the flagged weights and solve
// the base problem on the unmodified Euclidean cost.
SrotResult srot_hard(const DiscreteMeasure& source, const DiscreteMeasure& target,
                     const ClassifierModel& model, const SrotConfig& config);
SrotResult srot_hard_sided(const DiscreteMeasure& first, Side first_side,
                           const DiscreteMeasure& second, Side second_side,
                           const ClassifierModel& model, const SrotConfig& config);

// Soft weighting: solve the base problem on the modified ground cost;
// with rescale=true the less-contaminated side is scaled down to the
// transported mass first so a partial solve saturates both clean parts.
SrotResult srot_soft(const DiscreteMeasure& source, const DiscreteMeasure& target,
                     const ClassifierModel& model, const SrotConfig& config);
SrotResult srot_soft_sided(const DiscreteMeasure& first, Side first_side,
                           const DiscreteMeasure& second, Side second_side,
                           const ClassifierModel& model, const SrotConfig& config);

void save_mask_csv(const OutlierMask& mask, const std::string& path);

}  // namespace srot
