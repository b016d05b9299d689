#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "srot/measures.hpp"

namespace srot {

enum class CostKind { Euclidean, SquaredEuclidean, Truncated, SrotSoft };

std::string to_string(CostKind k);

// Pairwise ground costs. `param` is lambda for Truncated, gamma for SrotSoft.
struct CostMatrix {
    Eigen::MatrixXd values;  // n x m, finite and >= 0
    CostKind kind = CostKind::Euclidean;
    double param = 0.0;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

CostMatrix cost_matrix(const DiscreteMeasure& source, const DiscreteMeasure& target,
                       CostKind kind = CostKind::Euclidean, double param = 0.0);

enum class SolverTag { Exact, Sinkhorn, SinkhornUnbalanced, Partial, Truncated, Rot, SrotHard, SrotSoft };

std::string to_string(SolverTag t);

struct TransportPlan {
    Eigen::MatrixXd coupling;  // n x m, entries >= 0
    double objective = 0.0;    // <pi, C>; for UOT the full penalized value
    Eigen::VectorXd row_marginals;
    Eigen::VectorXd col_marginals;
    int iterations = 0;
    bool converged = false;
    SolverTag solver = SolverTag::Exact;

    // Diagnostics. Duals are populated by the exact solver (duality-gap
    // checks); potentials by the Sinkhorn family.
    Eigen::VectorXd dual_row;
    Eigen::VectorXd dual_col;

    double transported_mass() const { return coupling.sum(); }
    double transport_cost(const CostMatrix& c) const { return (coupling.array() * c.values.array()).sum(); }
};

struct SolverConfig {
    double epsilon = 0.01;            // entropic regularization, > 0 for Sinkhorn
    double tau = 1.0;                 // marginal KL penalty, > 0 for UOT
    int max_iters = 10000;
    double tol = 1e-9;                // marginal violation (balanced) / scaling residual (UOT)
    std::optional<bool> log_domain;   // unset: log domain iff epsilon < 0.05

    bool use_log_domain() const { return log_domain.value_or(epsilon < 0.05); }
};

// Kantorovich problem, network simplex. Requires sum(a) == sum(b) to 1e-9.
// Plans are deterministic: a fixed instance always yields the same vertex.
TransportPlan solve_exact(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const CostMatrix& c);

// Entropic OT with balanced marginals. converged=false is returned, not
// thrown, when max_iters is hit before the marginal tolerance.
TransportPlan sinkhorn(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const CostMatrix& c,
                       const SolverConfig& config);

// Entropic unbalanced OT: marginal constraints replaced by tau-weighted KL
// penalties, solved by generalized Sinkhorn scaling.
TransportPlan sinkhorn_unbalanced(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                  const CostMatrix& c, const SolverConfig& config);

// Transports exactly mass m <= min(sum a, sum b); realized by one dummy
// row/column appended to the exact solve.
TransportPlan partial_ot(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const CostMatrix& c,
                         double m);

// Exact OT under the truncated cost min{c, 2*lambda}.
TransportPlan truncated_ot(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                           const CostMatrix& c_euclid, double lambda);

enum class RotMode { Partial, Truncated };

// Robustified OT wrapper: trims a rho fraction per side (partial mode) or
// truncates at the (1-rho)-quantile cost (truncated mode; a documented
// heuristic, the calibration between rho and lambda is not canonical).
TransportPlan rot(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const CostMatrix& c,
                  double rho, RotMode mode);

// JSON persistence: dense coupling up to 1e6 entries, coordinate triplets
// beyond that; objective, solver tag and a config echo ride along.
void save_plan_json(const TransportPlan& plan, const std::string& path,
                    const std::string& config_echo = "{}");
TransportPlan load_plan_json(const std::string& path);

}  // namespace srot
