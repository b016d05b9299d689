#include "srot/measures.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "srot/error.hpp"
#include "srot/solvers.hpp"

namespace srot {

std::string to_string(OutlierType t) {
    switch (t) {
        case OutlierType::Clean: return "none";
        case OutlierType::TypeI: return "type1";
        case OutlierType::TypeII: return "type2";
    }
    return "none";
}

std::string to_string(Side s) { return s == Side::Source ? "source" : "target"; }

DiscreteMeasure DiscreteMeasure::subset(const std::vector<bool>& keep, const std::string& sub_name) const {
    Eigen::Index count = 0;
    for (bool k : keep) count += k;
    if (count == 0) throw EmptyMeasure("subset: no points kept");
    Eigen::MatrixXd pts(count, dim());
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < size(); ++i) {
        if (keep[static_cast<std::size_t>(i)]) pts.row(r++) = points.row(i);
    }
    return make_empirical(pts, std::nullopt, sub_name);
}

DiscreteMeasure ContaminatedDataset::clean_part(Side s) const {
    const auto& mask = truth(s);
    std::vector<bool> keep(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) keep[i] = !mask[i];
    return side(s).subset(keep, side(s).name + "_clean");
}

DiscreteMeasure make_empirical(const Eigen::MatrixXd& points,
                               const std::optional<Eigen::VectorXd>& weights,
                               const std::string& name) {
    const Eigen::Index n = points.rows();
    if (n < 1) throw InvalidPoint("make_empirical: need at least one point");
    if (!points.allFinite()) throw InvalidPoint("make_empirical: non-finite coordinate");
    DiscreteMeasure m;
    m.points = points;
    m.name = name;
    if (weights) {
        if (weights->size() != n) throw InvalidWeights("make_empirical: weight count != point count");
        if (!weights->allFinite()) throw InvalidWeights("make_empirical: non-finite weight");
        if ((weights->array() < 0.0).any()) throw InvalidWeights("make_empirical: negative weight");
        m.weights = *weights;
    } else {
        m.weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    }
    return m;
}

DiscreteMeasure rescale_mass(const DiscreteMeasure& measure, double m) {
    if (!(m > 0.0)) throw InvalidMass("rescale_mass: mass must be positive");
    const double total = measure.total_mass();
    if (!(total > 0.0)) throw InvalidMass("rescale_mass: measure has zero mass");
    DiscreteMeasure out = measure;
    out.weights *= m / total;
    return out;
}

DiscreteMeasure apply_hard_mask(const DiscreteMeasure& measure, const std::vector<bool>& keep) {
    if (static_cast<Eigen::Index>(keep.size()) != measure.size()) {
        throw InvalidWeights("apply_hard_mask: mask length mismatch");
    }
    DiscreteMeasure out = measure.subset(keep, measure.name);
    return out;
}

namespace {

// Exact-OT distance between two uniform empirical measures; used only to
// verify the defining inequalities of the two outlier types at generation
// time.
double w_distance(const DiscreteMeasure& x, const DiscreteMeasure& y) {
    const CostMatrix c = cost_matrix(x, y, CostKind::Euclidean);
    return solve_exact(x.weights, y.weights, c).objective;
}

void verify_outlier_definitions(const ContaminatedDataset& ds) {
    for (Side s : {Side::Source, Side::Target}) {
        const auto& types = ds.types(s);
        const auto& measure = ds.side(s);
        const DiscreteMeasure& other = ds.side(s == Side::Source ? Side::Target : Side::Source);
        std::vector<bool> clean(types.size()), t1(types.size()), t2(types.size());
        int n1 = 0, n2 = 0;
        for (std::size_t i = 0; i < types.size(); ++i) {
            clean[i] = types[i] == OutlierType::Clean;
            t1[i] = types[i] == OutlierType::TypeI;
            t2[i] = types[i] == OutlierType::TypeII;
            n1 += t1[i];
            n2 += t2[i];
        }
        if (n1 == 0 && n2 == 0) continue;
        const DiscreteMeasure clean_m = measure.subset(clean, "clean");
        const double w_clean = w_distance(clean_m, other);
        if (n1 > 0) {
            const double w_out = w_distance(measure.subset(t1, "t1"), other);
            if (!(w_clean <= w_out)) {
                std::ostringstream msg;
                msg << "type-I verification failed on " << to_string(s) << ": W(clean, other)="
                    << w_clean << " > W(outlier, other)=" << w_out;
                throw GenerationFailure(msg.str());
            }
        }
        if (n2 > 0) {
            const double w_out = w_distance(measure.subset(t2, "t2"), other);
            if (!(w_out < w_clean)) {
                std::ostringstream msg;
                msg << "type-II verification failed on " << to_string(s) << ": W(outlier, other)="
                    << w_out << " >= W(clean, other)=" << w_clean;
                throw GenerationFailure(msg.str());
            }
        }
    }
}

Eigen::RowVector2d disc_sample(Rng& rng, double cx, double cy, double radius) {
    // Uniform over the disc via rejection; keeps the transform free of
    // platform-dependent trig.
    for (;;) {
        const double x = rng.uniform(-1.0, 1.0);
        const double y = rng.uniform(-1.0, 1.0);
        if (x * x + y * y <= 1.0) return {cx + radius * x, cy + radius * y};
    }
}

Eigen::RowVector2d annulus_sample(Rng& rng, double cx, double cy, double r_lo, double r_hi) {
    for (;;) {
        const double x = rng.uniform(-1.0, 1.0);
        const double y = rng.uniform(-1.0, 1.0);
        const double s = x * x + y * y;
        if (s > 1.0 || s == 0.0) continue;
        const double r = rng.uniform(r_lo, r_hi) / std::sqrt(s);
        return {cx + r * x, cy + r * y};
    }
}

}  // namespace

// Geometry: uniform discs of radius 0.5 centered at (0,0) and (1.5,0).
// Type-I outliers live on an annulus 5-6x the blob separation away from the
// midpoint so they are far from both measures; type-II outliers are draws
// from the opposite blob itself.
ContaminatedDataset gen_toy_2d(int n_clean_per_side, int n_type1, int n_type2, std::uint64_t seed) {
    if (n_clean_per_side < 1) throw InvalidDataset("gen_toy_2d: need at least one clean point per side");
    if (n_type1 < 0 || n_type2 < 0) throw InvalidDataset("gen_toy_2d: negative outlier count");
    Rng rng = Rng(seed).fork(0x7031);

    const double blob_r = 0.5;
    const Eigen::RowVector2d c_src(0.0, 0.0), c_tgt(1.5, 0.0);
    const double sep = (c_tgt - c_src).norm();
    const Eigen::RowVector2d mid = 0.5 * (c_src + c_tgt);

    const int ns = n_clean_per_side + n_type1;
    const int nt = n_clean_per_side + n_type2;
    Eigen::MatrixXd src(ns, 2), tgt(nt, 2);
    ContaminatedDataset ds;
    ds.source_outlier_truth.assign(ns, false);
    ds.target_outlier_truth.assign(nt, false);
    ds.source_outlier_types.assign(ns, OutlierType::Clean);
    ds.target_outlier_types.assign(nt, OutlierType::Clean);

    for (int i = 0; i < n_clean_per_side; ++i) src.row(i) = disc_sample(rng, c_src.x(), c_src.y(), blob_r);
    for (int i = 0; i < n_type1; ++i) {
        src.row(n_clean_per_side + i) = annulus_sample(rng, mid.x(), mid.y(), 5.0 * sep, 6.0 * sep);
        ds.source_outlier_truth[n_clean_per_side + i] = true;
        ds.source_outlier_types[n_clean_per_side + i] = OutlierType::TypeI;
    }
    for (int i = 0; i < n_clean_per_side; ++i) tgt.row(i) = disc_sample(rng, c_tgt.x(), c_tgt.y(), blob_r);
    for (int i = 0; i < n_type2; ++i) {
        tgt.row(n_clean_per_side + i) = disc_sample(rng, c_src.x(), c_src.y(), blob_r);
        ds.target_outlier_truth[n_clean_per_side + i] = true;
        ds.target_outlier_types[n_clean_per_side + i] = OutlierType::TypeII;
    }

    ds.source = make_empirical(src, std::nullopt, "alpha");
    ds.target = make_empirical(tgt, std::nullopt, "beta");
    verify_outlier_definitions(ds);
    return ds;
}

// `source` (clean, the measure a flow will move) sits at (2.5, 0); `target`
// (fixed, contaminated) sits at the origin with round(kappa*n) type-II
// samples drawn from the source blob.
ContaminatedDataset gen_flow_2d(int n, double kappa, std::uint64_t seed) {
    if (n < 1) throw InvalidDataset("gen_flow_2d: need n >= 1");
    if (!(kappa >= 0.0 && kappa < 1.0)) throw InvalidDataset("gen_flow_2d: kappa must be in [0,1)");
    Rng rng = Rng(seed).fork(0xf102);

    const double sigma = 0.35;
    const Eigen::RowVector2d c_flow(2.5, 0.0), c_fixed(0.0, 0.0);
    const int n_out = static_cast<int>(std::lround(kappa * n));
    if (n_out >= n) throw InvalidDataset("gen_flow_2d: contamination leaves no clean target");

    Eigen::MatrixXd src(n, 2), tgt(n, 2);
    for (int i = 0; i < n; ++i) {
        src(i, 0) = c_flow.x() + sigma * rng.normal();
        src(i, 1) = c_flow.y() + sigma * rng.normal();
    }
    ContaminatedDataset ds;
    ds.source_outlier_truth.assign(n, false);
    ds.source_outlier_types.assign(n, OutlierType::Clean);
    ds.target_outlier_truth.assign(n, false);
    ds.target_outlier_types.assign(n, OutlierType::Clean);
    for (int i = 0; i < n; ++i) {
        const bool outlier = i >= n - n_out;
        const Eigen::RowVector2d c = outlier ? c_flow : c_fixed;
        tgt(i, 0) = c.x() + sigma * rng.normal();
        tgt(i, 1) = c.y() + sigma * rng.normal();
        if (outlier) {
            ds.target_outlier_truth[i] = true;
            ds.target_outlier_types[i] = OutlierType::TypeII;
        }
    }

    ds.source = make_empirical(src, std::nullopt, "beta0");
    ds.target = make_empirical(tgt, std::nullopt, "alpha");
    if (n_out > 0) verify_outlier_definitions(ds);
    return ds;
}

// Desk-scale stand-in for the image flow: the clean cluster is a low-rank
// Gaussian far from the origin, outliers and the whole `target` side are
// N(0, 0.01 I_d).
ContaminatedDataset gen_highdim_analog(int d, int n_clean, int n_outlier, std::uint64_t seed) {
    if (d < 2) throw InvalidDataset("gen_highdim_analog: need d >= 2");
    if (n_clean < 1 || n_outlier < 0) throw InvalidDataset("gen_highdim_analog: bad counts");
    Rng rng = Rng(seed).fork(0x41d);
    const int n_src = n_clean + n_outlier;
    const int n_tgt = n_src;
    const int rank = 4;

    Eigen::VectorXd mu = Eigen::VectorXd::Constant(d, 1.5 / std::sqrt(static_cast<double>(d)));
    Eigen::MatrixXd basis(d, rank);
    for (int k = 0; k < rank; ++k)
        for (int i = 0; i < d; ++i) basis(i, k) = rng.normal() / std::sqrt(static_cast<double>(d));

    Eigen::MatrixXd src(n_src, d), tgt(n_tgt, d);
    ContaminatedDataset ds;
    ds.source_outlier_truth.assign(n_src, false);
    ds.source_outlier_types.assign(n_src, OutlierType::Clean);
    ds.target_outlier_truth.assign(n_tgt, false);
    ds.target_outlier_types.assign(n_tgt, OutlierType::Clean);

    for (int i = 0; i < n_src; ++i) {
        if (i < n_clean) {
            Eigen::VectorXd g(rank);
            for (int k = 0; k < rank; ++k) g(k) = rng.normal();
            Eigen::VectorXd x = mu + 0.3 * (basis * g);
            for (int j = 0; j < d; ++j) x(j) += 0.02 * rng.normal();
            src.row(i) = x.transpose();
        } else {
            for (int j = 0; j < d; ++j) src(i, j) = 0.1 * rng.normal();
            ds.source_outlier_truth[i] = true;
            ds.source_outlier_types[i] = OutlierType::TypeII;
        }
    }
    for (int i = 0; i < n_tgt; ++i)
        for (int j = 0; j < d; ++j) tgt(i, j) = 0.1 * rng.normal();

    ds.source = make_empirical(src, std::nullopt, "alpha");
    ds.target = make_empirical(tgt, std::nullopt, "beta");
    if (n_outlier > 0) verify_outlier_definitions(ds);
    return ds;
}

void save_dataset_csv(const ContaminatedDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_dataset_csv: cannot open " + path);
    const Eigen::Index d = ds.source.dim();
    for (Eigen::Index j = 0; j < d; ++j) out << "x" << j << ",";
    out << "weight,side,is_outlier,outlier_type\n";
    out.precision(17);
    auto dump = [&](const DiscreteMeasure& mm, Side s) {
        const auto& truth = ds.truth(s);
        const auto& types = ds.types(s);
        for (Eigen::Index i = 0; i < mm.size(); ++i) {
            for (Eigen::Index j = 0; j < d; ++j) out << mm.points(i, j) << ",";
            out << mm.weights(i) << "," << to_string(s) << "," << (truth[i] ? 1 : 0) << ","
                << to_string(types[i]) << "\n";
        }
    };
    dump(ds.source, Side::Source);
    dump(ds.target, Side::Target);
}

ContaminatedDataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_dataset_csv: cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw IoError("load_dataset_csv: empty file " + path);
    Eigen::Index d = 0;
    {
        std::stringstream hs(header);
        std::string col;
        while (std::getline(hs, col, ',')) {
            if (col.size() > 1 && col[0] == 'x') ++d;
        }
    }
    if (d < 1) throw IoError("load_dataset_csv: no coordinate columns in " + path);

    struct Row {
        Eigen::VectorXd x;
        double w;
        bool outlier;
        OutlierType type;
    };
    std::vector<Row> src_rows, tgt_rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        Row row;
        row.x.resize(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            if (!std::getline(ls, cell, ',')) throw IoError("load_dataset_csv: short row");
            row.x(j) = std::stod(cell);
        }
        if (!std::getline(ls, cell, ',')) throw IoError("load_dataset_csv: missing weight");
        row.w = std::stod(cell);
        std::string side_str, outlier_str, type_str;
        std::getline(ls, side_str, ',');
        std::getline(ls, outlier_str, ',');
        std::getline(ls, type_str, ',');
        row.outlier = outlier_str == "1";
        row.type = type_str == "type1" ? OutlierType::TypeI
                 : type_str == "type2" ? OutlierType::TypeII
                                       : OutlierType::Clean;
        (side_str == "source" ? src_rows : tgt_rows).push_back(std::move(row));
    }
    if (src_rows.empty() || tgt_rows.empty()) throw IoError("load_dataset_csv: missing a side");

    auto build = [&](const std::vector<Row>& rows, const std::string& name, std::vector<bool>& truth,
                     std::vector<OutlierType>& types) {
        Eigen::MatrixXd pts(rows.size(), d);
        Eigen::VectorXd w(rows.size());
        truth.resize(rows.size());
        types.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            pts.row(static_cast<Eigen::Index>(i)) = rows[i].x.transpose();
            w(static_cast<Eigen::Index>(i)) = rows[i].w;
            truth[i] = rows[i].outlier;
            types[i] = rows[i].type;
        }
        return make_empirical(pts, w, name);
    };
    ContaminatedDataset ds;
    ds.source = build(src_rows, "alpha", ds.source_outlier_truth, ds.source_outlier_types);
    ds.target = build(tgt_rows, "beta", ds.target_outlier_truth, ds.target_outlier_types);
    return ds;
}

}  // namespace srot
