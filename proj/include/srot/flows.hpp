#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "srot/classifier.hpp"
#include "srot/measures.hpp"
#include "srot/solvers.hpp"
#include "srot/srot.hpp"

namespace srot {

enum class FlowLossKind { Exact, Sinkhorn, Uot, Partial, SrotHard, SrotSoft };

std::string to_string(FlowLossKind k);

// Everything the per-iteration solve needs. For the SROT variants the
// classifier is trained beforehand and frozen; detection (and the soft
// inverse-CE terms) is computed once at flow start unless redetect_every
// asks for periodic refreshes of the moving side.
struct FlowLossSpec {
    FlowLossKind kind = FlowLossKind::Exact;
    CostKind ground_cost = CostKind::Euclidean;  // Euclidean or SquaredEuclidean
    SolverConfig solver;                         // sinkhorn / uot settings
    double partial_mass = 0.9;                   // partial base mass
    SrotConfig srot;                             // srot settings
    std::optional<ClassifierModel> model;        // required for srot kinds
    Side alpha_assigned = Side::Source;          // classifier label of the fixed measure
    Side beta_assigned = Side::Target;           // classifier label of the flowing measure
    int redetect_every = 0;

    std::string name() const;
};

struct FlowTrace {
    std::vector<Eigen::MatrixXd> snapshots;  // support at iteration 0, every log_every, and the end
    std::vector<int> snapshot_iterations;
    std::vector<double> loss_series;  // h(alpha, beta_t), one entry per iteration
    std::vector<double> eval_series;  // exact W(alpha_clean, beta_t) at logged iterations
    std::vector<int> eval_iterations;
    double lr = 0.0;
    int iters = 0;
    int log_every = 0;
    std::string loss_name;
    bool failed = false;
    int failed_at = -1;
    std::optional<DiscreteMeasure> alpha_clean;
    Eigen::MatrixXd final_coupling;

    double initial_eval() const { return eval_series.empty() ? 0.0 : eval_series.front(); }
    double final_eval() const { return eval_series.empty() ? 0.0 : eval_series.back(); }
};

// Envelope gradient of <pi, C(z)> with the plan held fixed, taken in the
// target support. Euclidean: sum_i pi_ij (z_j - x_i)/|z_j - x_i| with
// coincident pairs contributing zero; squared Euclidean: sum_i 2 pi_ij (z_j - x_i).
Eigen::MatrixXd ot_support_grad(const TransportPlan& plan, const DiscreteMeasure& source,
                                const DiscreteMeasure& target, CostKind cost_kind);

// Explicit Euler on the flowing support: z <- z - lr * n * grad, with a
// fresh solve (and so a fresh loss value) every iteration.
FlowTrace euler_flow(const DiscreteMeasure& alpha, const DiscreteMeasure& beta0,
                     const FlowLossSpec& spec, double lr, int iters, int log_every,
                     const std::optional<DiscreteMeasure>& alpha_clean = std::nullopt);

struct FlowReportRow {
    std::string name;
    double final_loss;
    double final_eval;
    int rank;  // 1 = closest to alpha_clean
};

struct FlowReport {
    std::vector<FlowReportRow> rows;
};

// Requires every trace to carry the same alpha_clean reference.
FlowReport compare_flows(const std::vector<FlowTrace>& traces);

// dir/trace.csv plus dir/snapshots/snap_######.csv point files.
void save_trace(const FlowTrace& trace, const std::string& dir);
void save_flow_report_csv(const FlowReport& report, const std::string& path);

}  // namespace srot
