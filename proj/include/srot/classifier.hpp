#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "srot/measures.hpp"
#include "srot/rng.hpp"

namespace srot {

enum class Activation { Relu, Tanh };
enum class TrainMode { CE, AR };

std::string to_string(Activation a);
std::string to_string(TrainMode m);

// Feedforward net with a 2-way softmax head (source vs target). Gradients
// are hand-rolled; the finite-difference suite in the tests pins them.
// Inputs pass through the stored affine standardization first; train()
// fits it to the training set so uncentered data cannot starve the units.
struct ClassifierModel {
    std::vector<int> layer_dims;  // input d -> hidden... -> 2
    std::vector<Eigen::MatrixXd> weights;  // layer l: dims[l+1] x dims[l]
    std::vector<Eigen::VectorXd> biases;
    Activation activation = Activation::Relu;
    Eigen::VectorXd input_offset;  // empty = identity transform
    Eigen::VectorXd input_scale;

    int input_dim() const { return layer_dims.front(); }
    std::size_t n_layers() const { return weights.size(); }
    bool all_finite() const;
};

struct TrainConfig {
    double omega = 0.001;   // CE weight inside the adversarially regularized loss
    double eta = 1.0;       // perturbation radius; data-scale dependent
    int power_iters = 1;
    double lr = 0.005;      // Adam step size used by train()
    int epochs = 200;
    int batch_size = 64;
    TrainMode mode = TrainMode::AR;
    std::uint64_t seed = 0;
    bool standardize = false;  // fit an input standardization on the training set
};

struct ParamGrads {
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
};

struct EpochStats {
    int epoch;
    double ce_loss;
    double ar_loss;  // KL regularizer part; 0 in CE mode
    double accuracy;
};

ClassifierModel init_model(const std::vector<int>& layer_dims, std::uint64_t seed,
                           Activation activation = Activation::Relu);

// Rows of X are samples; returns rows of class probabilities (sum to 1).
Eigen::MatrixXd forward(const ClassifierModel& model, const Eigen::MatrixXd& X);

// Mean cross-entropy of one-hot Y plus parameter gradients.
std::pair<double, ParamGrads> ce_grad(const ClassifierModel& model, const Eigen::MatrixXd& X,
                                      const Eigen::MatrixXd& Y);

struct VatDirections {
    Eigen::MatrixXd r;             // one eta-length perturbation per row of X
    std::vector<bool> degenerate;  // true where the gradient vanished at every power step
};

// Power-iteration estimate of the direction maximizing KL(f(x+r) || f(x))
// within radius eta, starting from a seeded random unit vector.
VatDirections vat_directions(const ClassifierModel& model, const Eigen::MatrixXd& X, double eta,
                             int power_iters, Rng& rng);
VatDirections vat_direction(const ClassifierModel& model, const Eigen::VectorXd& x, double eta,
                            int power_iters, Rng& rng);

// Loss and parameter gradients of omega*CE(f(X), Y) + KL(f(X + r) || p0)
// with the perturbation r and the virtual labels p0 held fixed. ar_step and
// the finite-difference gradient checks share this.
std::pair<double, ParamGrads> ar_grad(const ClassifierModel& model, const Eigen::MatrixXd& X,
                                      const Eigen::MatrixXd& Y, const Eigen::MatrixXd& r,
                                      const Eigen::MatrixXd& p0, double omega);

// One plain gradient step on omega*CE + KL(f(x+r_a) || f(x)); the clean
// prediction acts as a constant virtual label in the KL term.
std::pair<double, ClassifierModel> ar_step(const ClassifierModel& model, const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& Y, const TrainConfig& config);

struct TrainResult {
    ClassifierModel model;
    std::vector<EpochStats> history;
};

// Binary source-vs-target training over the dataset (Adam, seeded shuffles;
// deterministic single-threaded).
TrainResult train(const ClassifierModel& model, const ContaminatedDataset& dataset,
                  const TrainConfig& config);

struct SidePrediction {
    std::vector<Side> sides;
    Eigen::VectorXd confidence;  // probability of the predicted side
};

// Argmax of forward; exact ties fall back to the assigned side when given
// (so a tie never flags an outlier), else to Source.
SidePrediction predict_side(const ClassifierModel& model, const Eigen::MatrixXd& X,
                            const std::vector<Side>* assigned = nullptr);

void save_model_json(const ClassifierModel& model, const std::string& path,
                     const TrainConfig* config_echo = nullptr);
ClassifierModel load_model_json(const std::string& path);
void save_history_csv(const std::vector<EpochStats>& history, const std::string& path);

}  // namespace srot
