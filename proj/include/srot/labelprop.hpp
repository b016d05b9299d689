#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "srot/classifier.hpp"
#include "srot/measures.hpp"
#include "srot/solvers.hpp"

namespace srot {

inline constexpr int kUnclassified = -1;

struct LabeledMeasure {
    DiscreteMeasure measure;
    std::vector<int> labels;  // in [0, n_classes)
    int n_classes = 0;
};

struct LabeledContaminatedDataset {
    ContaminatedDataset data;
    std::vector<int> source_labels;
    std::vector<int> target_labels;  // outliers keep their true class
    int n_classes = 0;
};

// Target j receives the label of the source atom it is most transported
// to, provided that mass reaches threshold_frac * b_j (ties toward the
// lowest source index; empty columns stay unclassified).
std::vector<int> propagate_labels(const TransportPlan& plan, const std::vector<int>& source_labels,
                                  const Eigen::VectorXd& b, double threshold_frac);

struct AccuracyResult {
    double accuracy;                         // correct clean targets / clean targets
    std::optional<double> labeled_accuracy;  // correct / classified; empty when nothing classified
    int n_classified = 0;
};

AccuracyResult accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                        const std::vector<bool>& clean_mask);

// Plan-weighted average of the source points per target column; rows of
// untransported targets are NaN and reported in `unprojected`.
Eigen::MatrixXd barycentric_projection(const TransportPlan& plan, const Eigen::MatrixXd& source_points,
                                       std::vector<bool>* unprojected = nullptr);

// Gaussian-mixture stand-in for the digits setup: 400 two-class source
// samples plus 100 from a third far-away class, and 400 two-class target
// samples plus 100 type-II outliers drawn from the source clusters.
LabeledContaminatedDataset make_labelprop_dataset(std::uint64_t seed);

enum class LabelPropMethod { Partial, Truncated, SrotHardPartial };

std::string to_string(LabelPropMethod m);

struct LabelPropConfig {
    double threshold_frac = 0.25;
    TrainConfig train;  // classifier settings for the SROT variant
    Activation activation = Activation::Relu;
    std::vector<int> hidden = {128, 128};
};

struct LabelPropRow {
    LabelPropMethod method;
    double m;
    double accuracy;
    std::optional<double> labeled_accuracy;
    int n_classified;
};

struct LabelPropReport {
    std::vector<LabelPropRow> rows;
};

LabelPropReport run_labelprop_experiment(const LabeledContaminatedDataset& dataset,
                                         const std::vector<LabelPropMethod>& methods,
                                         const std::vector<double>& mass_grid,
                                         const LabelPropConfig& config);

void save_labelprop_report_csv(const LabelPropReport& report, const std::string& path);

}  // namespace srot
