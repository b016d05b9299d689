#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "srot/rng.hpp"

namespace srot {

// Weighted point cloud. Immutable by convention: every operation returns a
// fresh measure.
struct DiscreteMeasure {
    Eigen::MatrixXd points;   // n x d support
    Eigen::VectorXd weights;  // n nonnegative reals
    std::string name;

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }
    double total_mass() const { return weights.sum(); }
    bool is_probability() const { return std::abs(total_mass() - 1.0) <= 1e-9; }

    // Uniform-weighted restriction to the rows where keep[i] is true.
    DiscreteMeasure subset(const std::vector<bool>& keep, const std::string& sub_name) const;
};

enum class OutlierType { Clean, TypeI, TypeII };
enum class Side { Source, Target };

std::string to_string(OutlierType t);
std::string to_string(Side s);

struct ContaminatedDataset {
    DiscreteMeasure source;
    DiscreteMeasure target;
    std::vector<bool> source_outlier_truth;
    std::vector<bool> target_outlier_truth;
    std::vector<OutlierType> source_outlier_types;
    std::vector<OutlierType> target_outlier_types;

    const DiscreteMeasure& side(Side s) const { return s == Side::Source ? source : target; }
    const std::vector<bool>& truth(Side s) const {
        return s == Side::Source ? source_outlier_truth : target_outlier_truth;
    }
    const std::vector<OutlierType>& types(Side s) const {
        return s == Side::Source ? source_outlier_types : target_outlier_types;
    }
    // Clean part of one side as a uniform probability measure.
    DiscreteMeasure clean_part(Side s) const;
};

// points copied verbatim; missing weights default to uniform 1/n.
DiscreteMeasure make_empirical(const Eigen::MatrixXd& points,
                               const std::optional<Eigen::VectorXd>& weights = std::nullopt,
                               const std::string& name = "");

// Fig.-1 style toy: two uniform 2D discs (radius 0.5, centers 1.5 apart).
// Type-I outliers join the source on a far annulus, type-II outliers join
// the target but are drawn from the source disc. Both outlier kinds are
// verified against their defining Wasserstein inequality before returning.
ContaminatedDataset gen_toy_2d(int n_clean_per_side, int n_type1, int n_type2, std::uint64_t seed);

// Gradient-flow dataset: `source` is the clean measure that will flow,
// `target` is the fixed contaminated measure (a fraction kappa of its
// samples are type-II outliers sitting in the source blob).
ContaminatedDataset gen_flow_2d(int n, double kappa, std::uint64_t seed);

// High-dimensional analog of the image-flow setup: `source` mixes a
// structured clean cluster with isotropic Gaussian outliers drawn from the
// `target` distribution N(0, 0.01 I_d).
ContaminatedDataset gen_highdim_analog(int d, int n_clean, int n_outlier, std::uint64_t seed);

// Multiply weights so the total mass becomes m.
DiscreteMeasure rescale_mass(const DiscreteMeasure& measure, double m);

// Drop the masked-out points and give the survivors uniform weight.
DiscreteMeasure apply_hard_mask(const DiscreteMeasure& measure, const std::vector<bool>& keep);

// CSV persistence (header: x0,...,x{d-1},weight,side,is_outlier,outlier_type).
// Truth columns are for evaluation only; solvers never read them.
void save_dataset_csv(const ContaminatedDataset& ds, const std::string& path);
ContaminatedDataset load_dataset_csv(const std::string& path);

}  // namespace srot
