#include "srot/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "srot/error.hpp"

namespace srot {

namespace {

using json = nlohmann::json;

struct ForwardCache {
    std::vector<Eigen::MatrixXd> activations;  // activations[0] = X, then per layer
    std::vector<Eigen::MatrixXd> pre;          // pre-activation of each layer
    Eigen::MatrixXd probs;
};

Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& z, Activation act) {
    if (act == Activation::Relu) return z.cwiseMax(0.0);
    return z.array().tanh().matrix();
}

Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& z, Activation act) {
    if (act == Activation::Relu) return (z.array() > 0.0).cast<double>().matrix();
    return (1.0 - z.array().tanh().square()).matrix();
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - mx).exp();
        p.row(i) = (e / e.sum()).matrix().transpose();
    }
    return p;
}

Eigen::MatrixXd standardize(const ClassifierModel& model, const Eigen::MatrixXd& X) {
    if (model.input_offset.size() == 0) return X;
    Eigen::MatrixXd out = X;
    out.rowwise() -= model.input_offset.transpose();
    out.array().rowwise() /= model.input_scale.transpose().array();
    return out;
}

ForwardCache forward_cached(const ClassifierModel& model, const Eigen::MatrixXd& X) {
    ForwardCache cache;
    cache.activations.push_back(standardize(model, X));
    Eigen::MatrixXd a = cache.activations.front();
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        Eigen::MatrixXd z = a * model.weights[l].transpose();
        z.rowwise() += model.biases[l].transpose();
        cache.pre.push_back(z);
        if (l + 1 < model.n_layers()) {
            a = apply_activation(z, model.activation);
            cache.activations.push_back(a);
        } else {
            cache.probs = softmax_rows(z);
        }
    }
    return cache;
}

// Backprop of dL/dlogits through the cached forward; optionally also
// produces the gradient with respect to the input rows.
ParamGrads backprop(const ClassifierModel& model, const ForwardCache& cache,
                    const Eigen::MatrixXd& dlogits, Eigen::MatrixXd* dinput = nullptr) {
    const std::size_t L = model.n_layers();
    ParamGrads g;
    g.dw.resize(L);
    g.db.resize(L);
    Eigen::MatrixXd delta = dlogits;
    for (std::size_t l = L; l-- > 0;) {
        g.dw[l] = delta.transpose() * cache.activations[l];
        g.db[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            delta = (delta * model.weights[l]).cwiseProduct(activation_grad(cache.pre[l - 1], model.activation));
        } else if (dinput) {
            *dinput = delta * model.weights[0];
            if (model.input_scale.size() > 0) {
                dinput->array().rowwise() /= model.input_scale.transpose().array();
            }
        }
    }
    return g;
}

// dL/dlogits of mean_b KL(q_b || p_b) with p treated as constant.
Eigen::MatrixXd kl_logit_grad(const Eigen::MatrixXd& q, const Eigen::MatrixXd& p, double* loss_out) {
    const Eigen::Index B = q.rows();
    Eigen::MatrixXd dz(q.rows(), q.cols());
    double loss = 0.0;
    for (Eigen::Index b = 0; b < B; ++b) {
        double kl = 0.0;
        for (Eigen::Index k = 0; k < q.cols(); ++k) {
            const double qs = std::max(q(b, k), 1e-300);
            const double ps = std::max(p(b, k), 1e-300);
            kl += qs * std::log(qs / ps);
        }
        loss += kl;
        for (Eigen::Index k = 0; k < q.cols(); ++k) {
            const double qs = std::max(q(b, k), 1e-300);
            const double ps = std::max(p(b, k), 1e-300);
            dz(b, k) = q(b, k) * (std::log(qs / ps) - kl) / static_cast<double>(B);
        }
    }
    if (loss_out) *loss_out = loss / static_cast<double>(B);
    return dz;
}

void axpy(ParamGrads& acc, const ParamGrads& g, double scale) {
    for (std::size_t l = 0; l < acc.dw.size(); ++l) {
        acc.dw[l] += scale * g.dw[l];
        acc.db[l] += scale * g.db[l];
    }
}

ParamGrads zero_grads(const ClassifierModel& model) {
    ParamGrads g;
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        g.dw.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        g.db.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }
    return g;
}

double data_scale(const Eigen::MatrixXd& X) {
    return std::max(1.0, X.cwiseAbs().maxCoeff());
}

struct BatchLoss {
    double total;
    double ce;
    double kl;
    ParamGrads grads;
};

double mean_ce(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& Y) {
    double ce = 0.0;
    for (Eigen::Index b = 0; b < Y.rows(); ++b)
        for (Eigen::Index k = 0; k < Y.cols(); ++k)
            if (Y(b, k) > 0.0) ce -= Y(b, k) * std::log(std::max(probs(b, k), 1e-300));
    return ce / static_cast<double>(Y.rows());
}

BatchLoss batch_loss(const ClassifierModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                     const TrainConfig& cfg, Rng& rng) {
    BatchLoss out;
    if (cfg.mode == TrainMode::CE) {
        const ForwardCache clean = forward_cached(model, X);
        out.ce = mean_ce(clean.probs, Y);
        out.kl = 0.0;
        out.total = out.ce;
        out.grads = backprop(model, clean, (clean.probs - Y) / static_cast<double>(X.rows()));
        return out;
    }
    const Eigen::MatrixXd p0 = forward(model, X);
    const VatDirections vat = vat_directions(model, X, cfg.eta, cfg.power_iters, rng);
    auto [total, grads] = ar_grad(model, X, Y, vat.r, p0, cfg.omega);
    out.ce = mean_ce(p0, Y);
    out.total = total;
    out.kl = total - cfg.omega * out.ce;
    out.grads = std::move(grads);
    return out;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }
std::string to_string(TrainMode m) { return m == TrainMode::CE ? "ce" : "ar"; }

bool ClassifierModel::all_finite() const {
    for (const auto& w : weights)
        if (!w.allFinite()) return false;
    for (const auto& b : biases)
        if (!b.allFinite()) return false;
    return true;
}

ClassifierModel init_model(const std::vector<int>& layer_dims, std::uint64_t seed, Activation activation) {
    if (layer_dims.size() < 2) throw InvalidArchitecture("init_model: need at least input and output dims");
    if (layer_dims.back() != 2) throw InvalidArchitecture("init_model: output dim must be 2");
    for (int d : layer_dims)
        if (d < 1) throw InvalidArchitecture("init_model: non-positive layer dim");

    Rng rng = Rng(seed).fork(0x1917);
    ClassifierModel model;
    model.layer_dims = layer_dims;
    model.activation = activation;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const int fan_in = layer_dims[l], fan_out = layer_dims[l + 1];
        const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-s, s);
        model.weights.push_back(std::move(w));
        model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return model;
}

Eigen::MatrixXd forward(const ClassifierModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.input_dim()) throw InvalidArchitecture("forward: input dim mismatch");
    return forward_cached(model, X).probs;
}

std::pair<double, ParamGrads> ce_grad(const ClassifierModel& model, const Eigen::MatrixXd& X,
                                      const Eigen::MatrixXd& Y) {
    if (Y.rows() != X.rows() || Y.cols() != 2) throw InvalidDataset("ce_grad: labels must be one-hot pairs");
    TrainConfig cfg;
    cfg.mode = TrainMode::CE;
    Rng rng(0);
    BatchLoss bl = batch_loss(model, X, Y, cfg, rng);
    return {bl.ce, std::move(bl.grads)};
}

VatDirections vat_directions(const ClassifierModel& model, const Eigen::MatrixXd& X, double eta,
                             int power_iters, Rng& rng) {
    if (!(eta > 0.0)) throw InvalidArchitecture("vat_directions: eta must be positive");
    if (power_iters < 1) throw InvalidArchitecture("vat_directions: power_iters must be >= 1");
    const Eigen::Index B = X.rows(), d = X.cols();

    Eigen::MatrixXd dir(B, d);
    for (Eigen::Index b = 0; b < B; ++b) {
        double norm2 = 0.0;
        do {
            for (Eigen::Index j = 0; j < d; ++j) dir(b, j) = rng.normal();
            norm2 = dir.row(b).squaredNorm();
        } while (norm2 == 0.0);
        dir.row(b) /= std::sqrt(norm2);
    }

    const ForwardCache clean = forward_cached(model, X);
    const double xi = 1e-6 * data_scale(X);
    std::vector<bool> degenerate(B, true);

    for (int it = 0; it < power_iters; ++it) {
        const ForwardCache perturbed = forward_cached(model, X + xi * dir);
        Eigen::MatrixXd dz = kl_logit_grad(perturbed.probs, clean.probs, nullptr);
        Eigen::MatrixXd din;
        backprop(model, perturbed, dz, &din);
        for (Eigen::Index b = 0; b < B; ++b) {
            const double nrm = din.row(b).norm();
            if (nrm > 1e-30) {
                dir.row(b) = din.row(b) / nrm;
                degenerate[b] = false;
            }
        }
    }

    VatDirections out;
    out.r = eta * dir;
    out.degenerate = std::move(degenerate);
    return out;
}

VatDirections vat_direction(const ClassifierModel& model, const Eigen::VectorXd& x, double eta,
                            int power_iters, Rng& rng) {
    return vat_directions(model, x.transpose(), eta, power_iters, rng);
}

std::pair<double, ParamGrads> ar_grad(const ClassifierModel& model, const Eigen::MatrixXd& X,
                                      const Eigen::MatrixXd& Y, const Eigen::MatrixXd& r,
                                      const Eigen::MatrixXd& p0, double omega) {
    const Eigen::Index B = X.rows();
    const ForwardCache clean = forward_cached(model, X);
    const ForwardCache perturbed = forward_cached(model, X + r);
    double kl_loss = 0.0;
    const Eigen::MatrixXd dz_kl = kl_logit_grad(perturbed.probs, p0, &kl_loss);
    ParamGrads grads = backprop(model, perturbed, dz_kl);
    axpy(grads, backprop(model, clean, (clean.probs - Y) / static_cast<double>(B)), omega);
    const double loss = omega * mean_ce(clean.probs, Y) + kl_loss;
    return {loss, std::move(grads)};
}

std::pair<double, ClassifierModel> ar_step(const ClassifierModel& model, const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& Y, const TrainConfig& config) {
    if (config.mode != TrainMode::AR) throw InvalidDataset("ar_step: config.mode must be AR");
    Rng rng = Rng(config.seed).fork(0xa5);
    BatchLoss bl = batch_loss(model, X, Y, config, rng);
    ClassifierModel next = model;
    for (std::size_t l = 0; l < next.n_layers(); ++l) {
        next.weights[l] -= config.lr * bl.grads.dw[l];
        next.biases[l] -= config.lr * bl.grads.db[l];
    }
    if (!next.all_finite()) throw SolverFailure("ar_step: non-finite parameter after update");
    return {bl.total, std::move(next)};
}

TrainResult train(const ClassifierModel& model, const ContaminatedDataset& dataset,
                  const TrainConfig& config) {
    const Eigen::Index ns = dataset.source.size(), nt = dataset.target.size();
    if (ns < 1 || nt < 1) throw InvalidDataset("train: both sides must be nonempty");
    if (dataset.source.dim() != model.input_dim()) throw InvalidDataset("train: input dim mismatch");

    const Eigen::Index N = ns + nt;
    Eigen::MatrixXd X(N, dataset.source.dim());
    X.topRows(ns) = dataset.source.points;
    X.bottomRows(nt) = dataset.target.points;
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(N, 2);
    Y.topRows(ns).col(0).setOnes();
    Y.bottomRows(nt).col(1).setOnes();

    Rng shuffle_rng = Rng(config.seed).fork(0x5f);
    Rng vat_rng = Rng(config.seed).fork(0xa7);

    TrainResult result;
    result.model = model;
    if (config.standardize) {
        Eigen::VectorXd mean = X.colwise().mean();
        Eigen::VectorXd sd(X.cols());
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            const double var = (X.col(j).array() - mean(j)).square().sum() / static_cast<double>(N);
            sd(j) = std::max(std::sqrt(var), 1e-12);
        }
        result.model.input_offset = mean;
        result.model.input_scale = sd;
    }

    // Adam state
    ParamGrads m1 = zero_grads(model), m2 = zero_grads(model);
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    long step = 0;

    std::vector<int> order(N);
    for (Eigen::Index i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
    const int bs = std::max(1, config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double ce_sum = 0.0, kl_sum = 0.0;
        long seen = 0;
        for (Eigen::Index start = 0; start < N; start += bs) {
            const Eigen::Index count = std::min<Eigen::Index>(bs, N - start);
            Eigen::MatrixXd xb(count, X.cols()), yb(count, 2);
            for (Eigen::Index k = 0; k < count; ++k) {
                xb.row(k) = X.row(order[static_cast<std::size_t>(start + k)]);
                yb.row(k) = Y.row(order[static_cast<std::size_t>(start + k)]);
            }
            BatchLoss bl = batch_loss(result.model, xb, yb, config, vat_rng);
            ce_sum += bl.ce * static_cast<double>(count);
            kl_sum += bl.kl * static_cast<double>(count);
            seen += count;

            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t l = 0; l < result.model.n_layers(); ++l) {
                m1.dw[l] = beta1 * m1.dw[l] + (1.0 - beta1) * bl.grads.dw[l];
                m2.dw[l] = beta2 * m2.dw[l] +
                           (1.0 - beta2) * bl.grads.dw[l].cwiseProduct(bl.grads.dw[l]);
                m1.db[l] = beta1 * m1.db[l] + (1.0 - beta1) * bl.grads.db[l];
                m2.db[l] = beta2 * m2.db[l] +
                           (1.0 - beta2) * bl.grads.db[l].cwiseProduct(bl.grads.db[l]);
                result.model.weights[l] -=
                    (config.lr / c1) * (m1.dw[l].array() / ((m2.dw[l].array() / c2).sqrt() + adam_eps))
                        .matrix();
                result.model.biases[l] -=
                    (config.lr / c1) * (m1.db[l].array() / ((m2.db[l].array() / c2).sqrt() + adam_eps))
                        .matrix();
            }
        }
        if (!result.model.all_finite()) throw SolverFailure("train: non-finite parameter");

        const Eigen::MatrixXd probs = forward(result.model, X);
        long correct = 0;
        for (Eigen::Index i = 0; i < N; ++i) {
            const bool pred_target = probs(i, 1) > probs(i, 0);
            const bool is_target = Y(i, 1) > 0.0;
            if (pred_target == is_target) ++correct;
        }
        EpochStats st;
        st.epoch = epoch;
        st.ce_loss = ce_sum / static_cast<double>(seen);
        st.ar_loss = kl_sum / static_cast<double>(seen);
        st.accuracy = static_cast<double>(correct) / static_cast<double>(N);
        result.history.push_back(st);
    }
    return result;
}

SidePrediction predict_side(const ClassifierModel& model, const Eigen::MatrixXd& X,
                            const std::vector<Side>* assigned) {
    const Eigen::MatrixXd probs = forward(model, X);
    SidePrediction pred;
    pred.sides.resize(static_cast<std::size_t>(X.rows()));
    pred.confidence.resize(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        Side s;
        if (probs(i, 0) > probs(i, 1)) s = Side::Source;
        else if (probs(i, 1) > probs(i, 0)) s = Side::Target;
        else s = assigned ? (*assigned)[static_cast<std::size_t>(i)] : Side::Source;
        pred.sides[static_cast<std::size_t>(i)] = s;
        pred.confidence(i) = s == Side::Source ? probs(i, 0) : probs(i, 1);
    }
    return pred;
}

void save_model_json(const ClassifierModel& model, const std::string& path,
                     const TrainConfig* config_echo) {
    json j;
    j["layer_dims"] = model.layer_dims;
    j["activation"] = to_string(model.activation);
    json layers = json::array();
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        json layer;
        std::vector<double> w(model.weights[l].data(), model.weights[l].data() + model.weights[l].size());
        std::vector<double> b(model.biases[l].data(), model.biases[l].data() + model.biases[l].size());
        layer["w"] = w;
        layer["b"] = b;
        layers.push_back(layer);
    }
    j["layers"] = layers;
    if (model.input_offset.size() > 0) {
        j["input_offset"] = std::vector<double>(model.input_offset.data(),
                                                model.input_offset.data() + model.input_offset.size());
        j["input_scale"] = std::vector<double>(model.input_scale.data(),
                                               model.input_scale.data() + model.input_scale.size());
    }
    if (config_echo) {
        j["train_config"] = {{"omega", config_echo->omega},   {"eta", config_echo->eta},
                             {"power_iters", config_echo->power_iters}, {"lr", config_echo->lr},
                             {"epochs", config_echo->epochs}, {"batch_size", config_echo->batch_size},
                             {"mode", to_string(config_echo->mode)},    {"seed", config_echo->seed}};
    }
    std::ofstream out(path);
    if (!out) throw IoError("save_model_json: cannot open " + path);
    out << j.dump(2) << "\n";
}

ClassifierModel load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_model_json: cannot open " + path);
    json j;
    in >> j;
    ClassifierModel model;
    model.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    model.activation = j.at("activation").get<std::string>() == "tanh" ? Activation::Tanh : Activation::Relu;
    if (j.contains("input_offset")) {
        const auto off = j.at("input_offset").get<std::vector<double>>();
        const auto sc = j.at("input_scale").get<std::vector<double>>();
        model.input_offset = Eigen::Map<const Eigen::VectorXd>(off.data(), static_cast<Eigen::Index>(off.size()));
        model.input_scale = Eigen::Map<const Eigen::VectorXd>(sc.data(), static_cast<Eigen::Index>(sc.size()));
    }
    for (const auto& layer : j.at("layers")) {
        const auto w = layer.at("w").get<std::vector<double>>();
        const auto b = layer.at("b").get<std::vector<double>>();
        const std::size_t l = model.weights.size();
        const int fan_out = model.layer_dims[l + 1], fan_in = model.layer_dims[l];
        model.weights.push_back(Eigen::Map<const Eigen::MatrixXd>(w.data(), fan_out, fan_in));
        model.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), fan_out));
    }
    return model;
}

void save_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_history_csv: cannot open " + path);
    out << "epoch,ce_loss,ar_loss,accuracy\n";
    out.precision(17);
    for (const auto& st : history) {
        out << st.epoch << "," << st.ce_loss << "," << st.ar_loss << "," << st.accuracy << "\n";
    }
}

}  // namespace srot
