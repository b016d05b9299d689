#include "srot/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "srot/error.hpp"
#include "srot/network_simplex.hpp"

namespace srot {

namespace {

using json = nlohmann::json;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const Eigen::ArrayXd& x) {
    const double c = x.maxCoeff();
    if (!std::isfinite(c)) return c;  // all -inf stays -inf
    return c + std::log((x - c).exp().sum());
}

Eigen::ArrayXd safe_log(const Eigen::ArrayXd& x) {
    Eigen::ArrayXd out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = x(i) > 0.0 ? std::log(x(i)) : kNegInf;
    return out;
}

// Generalized KL divergence sum x log(x/y) - x + y, with 0 log 0 = 0.
double generalized_kl(const Eigen::ArrayXd& x, const Eigen::ArrayXd& y) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x(i) > 0.0) acc += x(i) * std::log(x(i) / y(i)) - x(i) + y(i);
        else acc += y(i);
    }
    return acc;
}

void check_inputs(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const CostMatrix& c) {
    if (a.size() != c.rows() || b.size() != c.cols()) {
        throw SolverFailure("solver: weights do not match cost matrix dimensions");
    }
    if ((a.array() < 0.0).any() || (b.array() < 0.0).any()) {
        throw SolverFailure("solver: negative weight");
    }
}

void fill_marginals(TransportPlan& plan) {
    plan.row_marginals = plan.coupling.rowwise().sum();
    plan.col_marginals = plan.coupling.colwise().sum();
}

// Shared plumbing for the two Sinkhorn variants. phi = tau/(tau+eps) damps
// the updates; phi = 1 is the balanced algorithm.
TransportPlan sinkhorn_core(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const CostMatrix& c,
                            const SolverConfig& cfg, bool balanced) {
    check_inputs(a, b, c);
    if (!(cfg.epsilon > 0.0)) throw SolverFailure("sinkhorn: epsilon must be positive");
    if (!balanced && !(cfg.tau > 0.0)) throw SolverFailure("sinkhorn_unbalanced: tau must be positive");
    if (cfg.max_iters < 1 || !(cfg.tol > 0.0)) throw SolverFailure("sinkhorn: bad config");

    const Eigen::Index n = a.size(), m = b.size();
    const double eps = cfg.epsilon;
    const double phi = balanced ? 1.0 : cfg.tau / (cfg.tau + eps);

    TransportPlan plan;
    plan.solver = balanced ? SolverTag::Sinkhorn : SolverTag::SinkhornUnbalanced;
    plan.converged = false;

    const Eigen::ArrayXd log_a = safe_log(a.array());
    const Eigen::ArrayXd log_b = safe_log(b.array());

    Eigen::ArrayXd f = Eigen::ArrayXd::Zero(n), g = Eigen::ArrayXd::Zero(m);
    int iters = 0;

    auto build_coupling = [&]() {
        Eigen::MatrixXd pi(n, m);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < m; ++j) {
                const double l = log_a(i) + log_b(j) + (f(i) + g(j) - c.values(i, j)) / eps;
                pi(i, j) = std::isfinite(l) ? std::exp(l) : 0.0;
            }
        }
        return pi;
    };

    if (cfg.use_log_domain()) {
        Eigen::ArrayXd row_buf(m), col_buf(n);
        for (iters = 1; iters <= cfg.max_iters; ++iters) {
            const Eigen::ArrayXd f_prev = f, g_prev = g;
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < m; ++j) row_buf(j) = log_b(j) + (g(j) - c.values(i, j)) / eps;
                const double lse = log_sum_exp(row_buf);
                f(i) = std::isfinite(lse) ? -phi * eps * lse : 0.0;
            }
            for (Eigen::Index j = 0; j < m; ++j) {
                for (Eigen::Index i = 0; i < n; ++i) col_buf(i) = log_a(i) + (f(i) - c.values(i, j)) / eps;
                const double lse = log_sum_exp(col_buf);
                g(j) = std::isfinite(lse) ? -phi * eps * lse : 0.0;
            }
            if (balanced) {
                // Marginal violation; the row constraint is exact right
                // after the f update, so only the column residual matters,
                // but both are checked for symmetry.
                const Eigen::MatrixXd pi = build_coupling();
                const double err_r = (pi.rowwise().sum() - a).cwiseAbs().maxCoeff();
                const double err_c = (pi.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
                if (std::max(err_r, err_c) <= cfg.tol) {
                    plan.converged = true;
                    break;
                }
            } else {
                const double res = std::max((f - f_prev).abs().maxCoeff(), (g - g_prev).abs().maxCoeff());
                if (res <= cfg.tol) {
                    plan.converged = true;
                    break;
                }
            }
        }
        plan.coupling = build_coupling();
    } else {
        // Scaling form: K is referenced to a (x) b, u and v absorb the
        // potentials exp(f/eps), exp(g/eps).
        Eigen::MatrixXd K(n, m);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < m; ++j) K(i, j) = a(i) * b(j) * std::exp(-c.values(i, j) / eps);
        Eigen::VectorXd u = Eigen::VectorXd::Ones(n), v = Eigen::VectorXd::Ones(m);
        for (iters = 1; iters <= cfg.max_iters; ++iters) {
            const Eigen::VectorXd u_prev = u, v_prev = v;
            const Eigen::VectorXd Kv = K * v;
            for (Eigen::Index i = 0; i < n; ++i) {
                u(i) = Kv(i) > 0.0 ? std::pow(a(i) / Kv(i), phi) : 0.0;
            }
            const Eigen::VectorXd Ktu = K.transpose() * u;
            for (Eigen::Index j = 0; j < m; ++j) {
                v(j) = Ktu(j) > 0.0 ? std::pow(b(j) / Ktu(j), phi) : 0.0;
            }
            if (balanced) {
                const Eigen::MatrixXd pi = u.asDiagonal() * K * v.asDiagonal();
                const double err_r = (pi.rowwise().sum() - a).cwiseAbs().maxCoeff();
                const double err_c = (pi.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
                if (std::max(err_r, err_c) <= cfg.tol) {
                    plan.converged = true;
                    break;
                }
            } else {
                double res = 0.0;
                for (Eigen::Index i = 0; i < n; ++i)
                    res = std::max(res, std::abs(eps * (std::log(std::max(u(i), 1e-300)) -
                                                        std::log(std::max(u_prev(i), 1e-300)))));
                for (Eigen::Index j = 0; j < m; ++j)
                    res = std::max(res, std::abs(eps * (std::log(std::max(v(j), 1e-300)) -
                                                        std::log(std::max(v_prev(j), 1e-300)))));
                if (res <= cfg.tol) {
                    plan.converged = true;
                    break;
                }
            }
        }
        plan.coupling = u.asDiagonal() * K * v.asDiagonal();
        f = eps * safe_log(u.array());
        g = eps * safe_log(v.array());
    }

    plan.iterations = std::min(iters, cfg.max_iters);
    fill_marginals(plan);
    plan.dual_row = f.matrix();
    plan.dual_col = g.matrix();

    const double cost_part = (plan.coupling.array() * c.values.array()).sum();
    if (balanced) {
        plan.objective = cost_part;
    } else {
        // Full value of the penalized program at the returned coupling.
        const Eigen::ArrayXd r = plan.row_marginals.array(), s = plan.col_marginals.array();
        double kl_ref = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < m; ++j) {
                const double p = plan.coupling(i, j), q = a(i) * b(j);
                if (p > 0.0) kl_ref += p * std::log(p / q) - p + q;
                else kl_ref += q;
            }
        }
        plan.objective = cost_part + cfg.epsilon * kl_ref +
                         cfg.tau * (generalized_kl(r, a.array()) + generalized_kl(s, b.array()));
    }
    return plan;
}

}  // namespace

std::string to_string(CostKind k) {
    switch (k) {
        case CostKind::Euclidean: return "euclidean";
        case CostKind::SquaredEuclidean: return "sqeuclidean";
        case CostKind::Truncated: return "truncated";
        case CostKind::SrotSoft: return "srot_soft";
    }
    return "euclidean";
}

std::string to_string(SolverTag t) {
    switch (t) {
        case SolverTag::Exact: return "exact";
        case SolverTag::Sinkhorn: return "sinkhorn";
        case SolverTag::SinkhornUnbalanced: return "sinkhorn_unbalanced";
        case SolverTag::Partial: return "partial";
        case SolverTag::Truncated: return "truncated";
        case SolverTag::Rot: return "rot";
        case SolverTag::SrotHard: return "srot_hard";
        case SolverTag::SrotSoft: return "srot_soft";
    }
    return "exact";
}

CostMatrix cost_matrix(const DiscreteMeasure& source, const DiscreteMeasure& target, CostKind kind,
                       double param) {
    if (source.dim() != target.dim()) throw SolverFailure("cost_matrix: dimension mismatch");
    CostMatrix c;
    c.kind = kind;
    c.param = param;
    const Eigen::Index n = source.size(), m = target.size();
    c.values.resize(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const double d2 = (source.points.row(i) - target.points.row(j)).squaredNorm();
            switch (kind) {
                case CostKind::Euclidean: c.values(i, j) = std::sqrt(d2); break;
                case CostKind::SquaredEuclidean: c.values(i, j) = d2; break;
                case CostKind::Truncated: c.values(i, j) = std::min(std::sqrt(d2), 2.0 * param); break;
                case CostKind::SrotSoft:
                    throw UnsupportedCost("cost_matrix: SrotSoft is built by srot::soft_cost");
            }
        }
    }
    return c;
}

TransportPlan solve_exact(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const CostMatrix& c) {
    check_inputs(a, b, c);
    const double sa = a.sum(), sb = b.sum();
    if (std::abs(sa - sb) > 1e-9 * std::max(1.0, std::max(sa, sb))) {
        throw MassMismatch("solve_exact: total masses differ");
    }
    if (!(sa > 0.0)) throw MassMismatch("solve_exact: zero total mass");

    // Solve on the strictly positive support; zero-weight atoms contribute
    // empty rows/columns of the plan.
    std::vector<int> rows, cols;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a(i) > 0.0) rows.push_back(static_cast<int>(i));
    for (Eigen::Index j = 0; j < b.size(); ++j)
        if (b(j) > 0.0) cols.push_back(static_cast<int>(j));
    const bool compressed = rows.size() != static_cast<std::size_t>(a.size()) ||
                            cols.size() != static_cast<std::size_t>(b.size());

    Eigen::VectorXd ar(rows.size()), br(cols.size());
    Eigen::MatrixXd cr(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ar(static_cast<Eigen::Index>(i)) = a(rows[i]);
        for (std::size_t j = 0; j < cols.size(); ++j) cr(i, j) = c.values(rows[i], cols[j]);
    }
    for (std::size_t j = 0; j < cols.size(); ++j) br(static_cast<Eigen::Index>(j)) = b(cols[j]);
    br *= ar.sum() / br.sum();  // close the <=1e-9 gap exactly

    detail::SimplexResult sr = detail::transport_simplex(ar, br, cr);

    TransportPlan plan;
    plan.solver = SolverTag::Exact;
    plan.converged = sr.optimal;
    plan.iterations = sr.pivots;
    if (compressed) {
        plan.coupling = Eigen::MatrixXd::Zero(a.size(), b.size());
        plan.dual_row = Eigen::VectorXd::Zero(a.size());
        plan.dual_col = Eigen::VectorXd::Zero(b.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            plan.dual_row(rows[i]) = sr.dual_row(static_cast<Eigen::Index>(i));
            for (std::size_t j = 0; j < cols.size(); ++j)
                plan.coupling(rows[i], cols[j]) = sr.coupling(static_cast<Eigen::Index>(i),
                                                              static_cast<Eigen::Index>(j));
        }
        for (std::size_t j = 0; j < cols.size(); ++j)
            plan.dual_col(cols[j]) = sr.dual_col(static_cast<Eigen::Index>(j));
    } else {
        plan.coupling = std::move(sr.coupling);
        plan.dual_row = std::move(sr.dual_row);
        plan.dual_col = std::move(sr.dual_col);
    }
    fill_marginals(plan);
    plan.objective = (plan.coupling.array() * c.values.array()).sum();
    return plan;
}

TransportPlan sinkhorn(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const CostMatrix& c,
                       const SolverConfig& config) {
    const double sa = a.sum(), sb = b.sum();
    if (std::abs(sa - sb) > 1e-9 * std::max(1.0, std::max(sa, sb))) {
        throw MassMismatch("sinkhorn: total masses differ");
    }
    return sinkhorn_core(a, b, c, config, /*balanced=*/true);
}

TransportPlan sinkhorn_unbalanced(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                  const CostMatrix& c, const SolverConfig& config) {
    return sinkhorn_core(a, b, c, config, /*balanced=*/false);
}

TransportPlan partial_ot(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const CostMatrix& c,
                         double m) {
    check_inputs(a, b, c);
    const double sa = a.sum(), sb = b.sum();
    const double cap = std::min(sa, sb);
    if (!(m > 0.0) || m > cap + 1e-12) throw InvalidMass("partial_ot: mass to transport out of range");
    m = std::min(m, cap);

    // One dummy point per side absorbs the untransported mass; the
    // dummy-dummy cell is priced out so exactly m real mass moves.
    const Eigen::Index n = a.size(), mm = b.size();
    const double big = 2.0 * c.values.maxCoeff() + 1.0;
    Eigen::MatrixXd caug = Eigen::MatrixXd::Zero(n + 1, mm + 1);
    caug.topLeftCorner(n, mm) = c.values;
    caug(n, mm) = big;
    Eigen::VectorXd aaug(n + 1), baug(mm + 1);
    aaug.head(n) = a;
    aaug(n) = sb - m;
    baug.head(mm) = b;
    baug(mm) = sa - m;

    CostMatrix caug_m;
    caug_m.values = std::move(caug);
    caug_m.kind = c.kind;
    caug_m.param = c.param;
    TransportPlan aug = solve_exact(aaug, baug, caug_m);

    TransportPlan plan;
    plan.solver = SolverTag::Partial;
    plan.converged = aug.converged;
    plan.iterations = aug.iterations;
    plan.coupling = aug.coupling.topLeftCorner(n, mm);
    fill_marginals(plan);
    plan.objective = (plan.coupling.array() * c.values.array()).sum();
    plan.dual_row = aug.dual_row.head(n);
    plan.dual_col = aug.dual_col.head(mm);
    return plan;
}

TransportPlan truncated_ot(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                           const CostMatrix& c_euclid, double lambda) {
    if (!(lambda > 0.0)) throw SolverFailure("truncated_ot: lambda must be positive");
    CostMatrix trunc;
    trunc.kind = CostKind::Truncated;
    trunc.param = lambda;
    trunc.values = c_euclid.values.cwiseMin(2.0 * lambda);
    TransportPlan plan = solve_exact(a, b, trunc);
    plan.solver = SolverTag::Truncated;
    plan.objective = (plan.coupling.array() * trunc.values.array()).sum();
    return plan;
}

TransportPlan rot(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const CostMatrix& c,
                  double rho, RotMode mode) {
    if (!(rho >= 0.0 && rho < 0.5)) throw SolverFailure("rot: rho must lie in [0, 0.5)");
    TransportPlan plan;
    if (mode == RotMode::Partial) {
        if (rho == 0.0) {
            plan = solve_exact(a, b, c);
        } else {
            const double m = (1.0 - 2.0 * rho) * std::min(a.sum(), b.sum());
            plan = partial_ot(a, b, c, m);
        }
    } else {
        // Empirical (1-rho)-quantile of the cost entries, nearest-rank.
        std::vector<double> entries(c.values.data(), c.values.data() + c.values.size());
        std::sort(entries.begin(), entries.end());
        const std::size_t k = entries.size();
        std::size_t idx = static_cast<std::size_t>(std::ceil((1.0 - rho) * static_cast<double>(k)));
        idx = std::min(std::max<std::size_t>(idx, 1), k) - 1;
        const double lambda = std::max(entries[idx], 1e-300);
        plan = truncated_ot(a, b, c, lambda);
    }
    plan.solver = SolverTag::Rot;
    return plan;
}

void save_plan_json(const TransportPlan& plan, const std::string& path, const std::string& config_echo) {
    json j;
    j["objective"] = plan.objective;
    j["solver"] = to_string(plan.solver);
    j["iterations"] = plan.iterations;
    j["converged"] = plan.converged;
    j["rows"] = plan.coupling.rows();
    j["cols"] = plan.coupling.cols();
    j["config"] = json::parse(config_echo);
    const Eigen::Index total = plan.coupling.size();
    if (total <= 1000000) {
        std::vector<std::vector<double>> dense(plan.coupling.rows());
        for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i) {
            dense[i].assign(plan.coupling.cols(), 0.0);
            for (Eigen::Index jj = 0; jj < plan.coupling.cols(); ++jj) dense[i][jj] = plan.coupling(i, jj);
        }
        j["coupling"] = dense;
    } else {
        json coo = json::array();
        for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i)
            for (Eigen::Index jj = 0; jj < plan.coupling.cols(); ++jj)
                if (plan.coupling(i, jj) > 0.0) coo.push_back({i, jj, plan.coupling(i, jj)});
        j["coupling_coo"] = coo;
    }
    std::ofstream out(path);
    if (!out) throw IoError("save_plan_json: cannot open " + path);
    out << j.dump(2) << "\n";
}

TransportPlan load_plan_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_plan_json: cannot open " + path);
    json j;
    in >> j;
    TransportPlan plan;
    plan.objective = j.at("objective").get<double>();
    plan.iterations = j.at("iterations").get<int>();
    plan.converged = j.at("converged").get<bool>();
    const std::string tag = j.at("solver").get<std::string>();
    for (SolverTag t : {SolverTag::Exact, SolverTag::Sinkhorn, SolverTag::SinkhornUnbalanced,
                        SolverTag::Partial, SolverTag::Truncated, SolverTag::Rot, SolverTag::SrotHard,
                        SolverTag::SrotSoft}) {
        if (to_string(t) == tag) plan.solver = t;
    }
    const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
    plan.coupling = Eigen::MatrixXd::Zero(rows, cols);
    if (j.contains("coupling")) {
        const auto& dense = j.at("coupling");
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index jj = 0; jj < cols; ++jj)
                plan.coupling(i, jj) = dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(jj)].get<double>();
    } else {
        for (const auto& t : j.at("coupling_coo")) {
            plan.coupling(t[0].get<Eigen::Index>(), t[1].get<Eigen::Index>()) = t[2].get<double>();
        }
    }
    fill_marginals(plan);
    return plan;
}

}  // namespace srot
