#pragma once

#include <Eigen/Dense>

namespace srot::detail {

struct SimplexResult {
    Eigen::MatrixXd coupling;
    Eigen::VectorXd dual_row;
    Eigen::VectorXd dual_col;
    int pivots = 0;
    bool optimal = false;
};

// Network simplex on the dense transportation polytope. Callers must pass
// balanced masses (sum a == sum b, up to rounding the caller accepts in the
// marginals). Deterministic: block entering-arc search in fixed arc order
// with strict-improvement tie-breaking, so a given instance always produces
// the same vertex plan. Throws SolverFailure if the pivot cap is exceeded.
SimplexResult transport_simplex(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                const Eigen::MatrixXd& cost, long max_pivots = -1);

}  // namespace srot::detail
