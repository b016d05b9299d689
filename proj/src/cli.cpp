#include "srot/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "srot/error.hpp"
#include "srot/flows.hpp"
#include "srot/labelprop.hpp"
#include "srot/measures.hpp"
#include "srot/solvers.hpp"
#include "srot/srot.hpp"
#include "srot/svg.hpp"

namespace srot {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

int thread_cap() {
    if (const char* env = std::getenv("SROT_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

void reject_unknown_keys(const json& section, const std::vector<std::string>& known,
                         const std::string& where) {
    if (!section.is_object()) throw ConfigError("config: section '" + where + "' must be an object");
    for (const auto& [key, value] : section.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("config: unknown key '" + key + "' in section '" + where + "'");
        }
    }
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    reject_unknown_keys(j, {"seed", "out", "dataset", "classifier", "solver", "srot", "flow", "labelprop"},
                        "(root)");
    return j;
}

void write_resolved_config(const json& resolved, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "config.json");
    if (!out) throw IoError("cannot write config echo under " + out_dir);
    out << resolved.dump(2) << "\n";
}

void ensure_layout(const std::string& out_dir) {
    for (const char* sub : {"data", "plans", "traces", "plots"}) {
        fs::create_directories(fs::path(out_dir) / sub);
    }
}

TrainConfig classifier_config_from(const json& section, std::uint64_t seed) {
    reject_unknown_keys(section, {"mode", "omega", "eta", "power_iters", "lr", "epochs", "batch_size",
                                  "hidden", "activation", "standardize"},
                        "classifier");
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.mode = section.value("mode", "ar") == "ce" ? TrainMode::CE : TrainMode::AR;
    cfg.omega = section.value("omega", 0.001);
    cfg.eta = section.value("eta", 0.25);
    cfg.power_iters = section.value("power_iters", 1);
    cfg.lr = section.value("lr", 0.005);
    cfg.epochs = section.value("epochs", 300);
    cfg.batch_size = section.value("batch_size", 32);
    cfg.standardize = section.value("standardize", false);
    return cfg;
}

Activation activation_from(const json& section) {
    return section.value("activation", "relu") == "tanh" ? Activation::Tanh : Activation::Relu;
}

std::vector<int> hidden_dims_from(const json& section) {
    if (section.contains("hidden")) return section.at("hidden").get<std::vector<int>>();
    return {128, 128};
}

ClassifierModel train_for(const ContaminatedDataset& ds, const json& classifier_section,
                          std::uint64_t seed, std::vector<EpochStats>* history = nullptr,
                          TrainConfig* used = nullptr) {
    TrainConfig cfg = classifier_config_from(classifier_section, seed);
    std::vector<int> dims = hidden_dims_from(classifier_section);
    dims.insert(dims.begin(), static_cast<int>(ds.source.dim()));
    dims.push_back(2);
    ClassifierModel model = init_model(dims, seed, activation_from(classifier_section));
    TrainResult res = train(model, ds, cfg);
    if (history) *history = res.history;
    if (used) *used = cfg;
    return res.model;
}

// Flow orientation: the contaminated side stays fixed and the clean side
// flows toward it; with no contamination the source flows to the target.
struct FlowSides {
    const DiscreteMeasure* fixed;
    const DiscreteMeasure* flowing;
    Side fixed_assigned;
    Side flowing_assigned;
    DiscreteMeasure fixed_clean;
};

FlowSides flow_sides(const ContaminatedDataset& ds) {
    bool src_dirty = false, tgt_dirty = false;
    for (bool f : ds.source_outlier_truth) src_dirty |= f;
    for (bool f : ds.target_outlier_truth) tgt_dirty |= f;
    FlowSides sides;
    if (src_dirty && !tgt_dirty) {
        sides.fixed = &ds.source;
        sides.flowing = &ds.target;
        sides.fixed_assigned = Side::Source;
        sides.flowing_assigned = Side::Target;
        sides.fixed_clean = ds.clean_part(Side::Source);
    } else {
        sides.fixed = &ds.target;
        sides.flowing = &ds.source;
        sides.fixed_assigned = Side::Target;
        sides.flowing_assigned = Side::Source;
        sides.fixed_clean = tgt_dirty ? ds.clean_part(Side::Target) : ds.target;
    }
    return sides;
}

int cmd_gen(const json& cfg) {
    const std::string out_dir = cfg.at("out").get<std::string>();
    const std::uint64_t seed = cfg.value("seed", 0ULL);
    const json& d = cfg.at("dataset");
    reject_unknown_keys(d, {"preset", "n_clean", "n_type1", "n_type2", "n", "kappa", "dim", "n_outlier",
                            "force"},
                        "dataset");
    const std::string preset = d.value("preset", "");
    const bool force = d.value("force", false);

    ContaminatedDataset ds;
    if (preset == "toy2d") {
        ds = gen_toy_2d(d.value("n_clean", 75), d.value("n_type1", 6), d.value("n_type2", 4), seed);
    } else if (preset == "flow2d") {
        ds = gen_flow_2d(d.value("n", 1000), d.value("kappa", 0.1), seed);
    } else if (preset == "highdim") {
        ds = gen_highdim_analog(d.value("dim", 64), d.value("n_clean", 270), d.value("n_outlier", 30),
                                seed);
    } else {
        std::cerr << "gen: unknown preset '" << preset << "'\n";
        return 2;
    }

    ensure_layout(out_dir);
    const fs::path path = fs::path(out_dir) / "data" / (preset + ".csv");
    if (fs::exists(path) && !force) {
        std::cerr << "gen: " << path.string() << " exists (use --force to overwrite)\n";
        return 1;
    }
    write_resolved_config(cfg, out_dir);
    save_dataset_csv(ds, path.string());
    std::cout << "wrote " << path.string() << " (" << ds.source.size() + ds.target.size()
              << " points)\n";
    return 0;
}

int cmd_train(const json& cfg) {
    const std::string out_dir = cfg.at("out").get<std::string>();
    const std::uint64_t seed = cfg.value("seed", 0ULL);
    const std::string data_path = cfg.at("dataset").value("path", "");
    if (data_path.empty() || !fs::exists(data_path)) {
        std::cerr << "train: missing or unreadable dataset: " << data_path << "\n";
        return 1;
    }
    const ContaminatedDataset ds = load_dataset_csv(data_path);

    ensure_layout(out_dir);
    write_resolved_config(cfg, out_dir);

    std::vector<EpochStats> history;
    TrainConfig used;
    const ClassifierModel model = train_for(ds, cfg.value("classifier", json::object()), seed, &history,
                                            &used);
    save_model_json(model, (fs::path(out_dir) / "checkpoint.json").string(), &used);
    save_history_csv(history, (fs::path(out_dir) / "history.csv").string());
    save_mask_csv(detect_outliers(model, ds.source, Side::Source),
                  (fs::path(out_dir) / "detect_source.csv").string());
    save_mask_csv(detect_outliers(model, ds.target, Side::Target),
                  (fs::path(out_dir) / "detect_target.csv").string());
    std::cout << "trained " << to_string(used.mode) << " classifier, final accuracy "
              << (history.empty() ? 0.0 : history.back().accuracy) << "\n";
    return 0;
}

SolverConfig solver_config_from(const json& s) {
    SolverConfig sc;
    sc.epsilon = s.value("epsilon", 0.01);
    sc.tau = s.value("tau", 1.0);
    sc.max_iters = s.value("max_iters", 10000);
    sc.tol = s.value("tol", 1e-9);
    if (s.contains("log_domain") && !s.at("log_domain").is_null()) {
        sc.log_domain = s.at("log_domain").get<bool>();
    }
    return sc;
}

int cmd_solve(const json& cfg) {
    const std::string out_dir = cfg.at("out").get<std::string>();
    const std::uint64_t seed = cfg.value("seed", 0ULL);
    const std::string data_path = cfg.at("dataset").value("path", "");
    if (data_path.empty() || !fs::exists(data_path)) {
        std::cerr << "solve: dataset not found: " << data_path << "\n";
        return 1;
    }
    const json& s = cfg.at("solver");
    reject_unknown_keys(s, {"kind", "epsilon", "tau", "tau_grid", "max_iters", "tol", "log_domain",
                            "mass", "lambda", "rho", "rot_mode", "model"},
                        "solver");
    const std::string kind = s.value("kind", "exact");

    const ContaminatedDataset ds = load_dataset_csv(data_path);
    ensure_layout(out_dir);
    write_resolved_config(cfg, out_dir);

    const CostMatrix c = cost_matrix(ds.source, ds.target, CostKind::Euclidean);
    const SolverConfig sc = solver_config_from(s);

    auto emit = [&](const TransportPlan& plan, const std::string& stem) {
        save_plan_json(plan, (fs::path(out_dir) / "plans" / (stem + ".json")).string(), s.dump());
        plot_plan_svg(ds, plan, (fs::path(out_dir) / "plots" / (stem + ".svg")).string());
        std::cout << stem << ": objective " << plan.objective << ", transported "
                  << plan.transported_mass() << "\n";
    };

    if (kind == "exact") {
        emit(solve_exact(ds.source.weights, ds.target.weights, c), "plan_exact");
    } else if (kind == "sinkhorn") {
        emit(sinkhorn(ds.source.weights, ds.target.weights, c, sc), "plan_sinkhorn");
    } else if (kind == "uot") {
        std::vector<double> taus;
        if (s.contains("tau_grid")) taus = s.at("tau_grid").get<std::vector<double>>();
        else taus.push_back(sc.tau);
        for (double tau : taus) {
            SolverConfig sci = sc;
            sci.tau = tau;
            std::ostringstream stem;
            stem << "plan_uot_tau_" << tau;
            emit(sinkhorn_unbalanced(ds.source.weights, ds.target.weights, c, sci), stem.str());
        }
    } else if (kind == "partial") {
        emit(partial_ot(ds.source.weights, ds.target.weights, c, s.value("mass", 0.9)), "plan_partial");
    } else if (kind == "truncated") {
        emit(truncated_ot(ds.source.weights, ds.target.weights, c, s.value("lambda", 1.0)),
             "plan_truncated");
    } else if (kind == "rot") {
        const RotMode mode = s.value("rot_mode", "partial") == "truncated" ? RotMode::Truncated
                                                                           : RotMode::Partial;
        emit(rot(ds.source.weights, ds.target.weights, c, s.value("rho", 0.1), mode), "plan_rot");
    } else if (kind == "srot-hard" || kind == "srot-soft") {
        ClassifierModel model;
        if (s.contains("model") && !s.at("model").get<std::string>().empty()) {
            model = load_model_json(s.at("model").get<std::string>());
        } else {
            model = train_for(ds, cfg.value("classifier", json::object()), seed);
        }
        const json& sr = cfg.value("srot", json::object());
        reject_unknown_keys(sr, {"gamma", "rescale", "base", "mass", "ce_floor"}, "srot");
        SrotConfig scfg;
        scfg.solver_config = sc;
        if (sr.contains("gamma") && !sr.at("gamma").is_null()) scfg.gamma = sr.at("gamma").get<double>();
        scfg.rescale = sr.value("rescale", false);
        if (sr.contains("mass") && !sr.at("mass").is_null()) scfg.partial_mass = sr.at("mass").get<double>();
        scfg.ce_floor = sr.value("ce_floor", 1e-6);
        const std::string base = sr.value("base", kind == "srot-hard" ? "exact" : "partial");
        if (base == "exact") scfg.base_solver = BaseSolver::Exact;
        else if (base == "sinkhorn") scfg.base_solver = BaseSolver::Sinkhorn;
        else if (base == "uot") scfg.base_solver = BaseSolver::Uot;
        else if (base == "partial") scfg.base_solver = BaseSolver::Partial;
        else if (base == "truncated") scfg.base_solver = BaseSolver::Truncated;
        else {
            std::cerr << "solve: unknown srot base '" << base << "'\n";
            return 2;
        }
        const SrotResult res = kind == "srot-hard" ? srot_hard(ds.source, ds.target, model, scfg)
                                                   : srot_soft(ds.source, ds.target, model, scfg);
        save_mask_csv(res.source_mask, (fs::path(out_dir) / "detect_source.csv").string());
        save_mask_csv(res.target_mask, (fs::path(out_dir) / "detect_target.csv").string());
        emit(res.plan, kind == "srot-hard" ? "plan_srot_hard" : "plan_srot_soft");
    } else {
        std::cerr << "solve: unknown solver '" << kind << "'\n";
        return 2;
    }
    return 0;
}

int cmd_flow(const json& cfg) {
    const std::string out_dir = cfg.at("out").get<std::string>();
    const std::uint64_t seed = cfg.value("seed", 0ULL);
    const std::string data_path = cfg.at("dataset").value("path", "");
    if (data_path.empty() || !fs::exists(data_path)) {
        std::cerr << "flow: dataset not found: " << data_path << "\n";
        return 1;
    }
    const json& f = cfg.at("flow");
    reject_unknown_keys(f, {"losses", "lr", "iters", "log_every", "mass", "epsilon", "tau"}, "flow");
    const std::vector<std::string> losses = f.value("losses", std::vector<std::string>{});
    if (losses.empty()) {
        std::cerr << "flow: empty loss list\n";
        return 2;
    }

    const ContaminatedDataset ds = load_dataset_csv(data_path);
    ensure_layout(out_dir);
    write_resolved_config(cfg, out_dir);
    const FlowSides sides = flow_sides(ds);

    bool needs_model = false;
    for (const auto& name : losses) needs_model |= name.rfind("srot", 0) == 0;
    std::optional<ClassifierModel> model;
    if (needs_model) model = train_for(ds, cfg.value("classifier", json::object()), seed);

    const double lr = f.value("lr", 0.01);
    const int iters = f.value("iters", 400);
    const int log_every = f.value("log_every", 10);

    auto make_spec = [&](const std::string& name) {
        FlowLossSpec spec;
        if (name == "wasserstein") spec.kind = FlowLossKind::Exact;
        else if (name == "sinkhorn") spec.kind = FlowLossKind::Sinkhorn;
        else if (name == "uot") spec.kind = FlowLossKind::Uot;
        else if (name == "partial") spec.kind = FlowLossKind::Partial;
        else if (name == "srot_hard") spec.kind = FlowLossKind::SrotHard;
        else if (name == "srot_soft") spec.kind = FlowLossKind::SrotSoft;
        else throw ConfigError("flow: unknown loss '" + name + "'");
        spec.partial_mass = f.value("mass", 0.9);
        spec.solver.epsilon = f.value("epsilon", 0.01);
        spec.solver.tau = f.value("tau", 1.0);
        spec.model = model;
        spec.alpha_assigned = sides.fixed_assigned;
        spec.beta_assigned = sides.flowing_assigned;
        if (spec.kind == FlowLossKind::SrotSoft) {
            spec.srot.rescale = true;
            spec.srot.partial_mass = f.value("mass", 0.9);
        }
        return spec;
    };

    std::vector<FlowTrace> traces(losses.size());
    const int cap = thread_cap();
    std::size_t next = 0;
    while (next < losses.size()) {
        std::vector<std::future<FlowTrace>> batch;
        for (int k = 0; k < cap && next < losses.size(); ++k, ++next) {
            const std::string name = losses[next];
            batch.push_back(std::async(std::launch::async, [&, name] {
                return euler_flow(*sides.fixed, *sides.flowing, make_spec(name), lr, iters, log_every,
                                  sides.fixed_clean);
            }));
        }
        for (std::size_t k = 0; k < batch.size(); ++k) {
            traces[next - batch.size() + k] = batch[k].get();
        }
    }

    for (const auto& trace : traces) {
        save_trace(trace, (fs::path(out_dir) / "traces" / trace.loss_name).string());
    }
    const FlowReport report = compare_flows(traces);
    save_flow_report_csv(report, (fs::path(out_dir) / "report.csv").string());
    plot_traces_svg(traces, (fs::path(out_dir) / "plots" / "flows.svg").string());
    for (const auto& row : report.rows) {
        std::cout << row.name << ": final loss " << row.final_loss << ", final W to clean "
                  << row.final_eval << ", rank " << row.rank << "\n";
    }
    return 0;
}

int cmd_labelprop(const json& cfg) {
    const std::string out_dir = cfg.at("out").get<std::string>();
    const std::uint64_t seed = cfg.value("seed", 0ULL);
    const json& lp = cfg.at("labelprop");
    reject_unknown_keys(lp, {"methods", "mass_grid", "threshold"}, "labelprop");
    const std::vector<std::string> method_names = lp.value("methods", std::vector<std::string>{});
    const std::vector<double> mass_grid = lp.value("mass_grid", std::vector<double>{});
    if (method_names.empty() || mass_grid.empty()) {
        std::cerr << "labelprop: need at least one method and one mass value\n";
        return 2;
    }
    std::vector<LabelPropMethod> methods;
    for (const auto& name : method_names) {
        if (name == "partial") methods.push_back(LabelPropMethod::Partial);
        else if (name == "truncated") methods.push_back(LabelPropMethod::Truncated);
        else if (name == "srot_hard_partial") methods.push_back(LabelPropMethod::SrotHardPartial);
        else {
            std::cerr << "labelprop: unknown method '" << name << "'\n";
            return 2;
        }
    }

    ensure_layout(out_dir);
    write_resolved_config(cfg, out_dir);

    const LabeledContaminatedDataset ds = make_labelprop_dataset(seed);
    LabelPropConfig lpc;
    lpc.threshold_frac = lp.value("threshold", 0.25);
    lpc.train = classifier_config_from(cfg.value("classifier", json::object()), seed);
    lpc.activation = activation_from(cfg.value("classifier", json::object()));
    lpc.hidden = hidden_dims_from(cfg.value("classifier", json::object()));
    const LabelPropReport report = run_labelprop_experiment(ds, methods, mass_grid, lpc);
    save_labelprop_report_csv(report, (fs::path(out_dir) / "report.csv").string());
    plot_labelprop_svg(report, (fs::path(out_dir) / "plots" / "labelprop.svg").string());
    for (const auto& row : report.rows) {
        std::cout << to_string(row.method) << " m=" << row.m << ": accuracy " << row.accuracy << "\n";
    }
    return 0;
}

FlowTrace load_trace_csv(const std::string& dir) {
    FlowTrace trace;
    trace.loss_name = fs::path(dir).filename().string();
    std::ifstream in(fs::path(dir) / "trace.csv");
    if (!in) throw IoError("plot: cannot open trace.csv under " + dir);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::stringstream ls(line);
        std::string it_s, loss_s, eval_s;
        std::getline(ls, it_s, ',');
        std::getline(ls, loss_s, ',');
        std::getline(ls, eval_s, ',');
        if (!loss_s.empty()) trace.loss_series.push_back(std::stod(loss_s));
        if (!eval_s.empty()) {
            trace.eval_series.push_back(std::stod(eval_s));
            trace.eval_iterations.push_back(std::stoi(it_s));
        }
    }
    trace.iters = static_cast<int>(trace.loss_series.size());
    return trace;
}

LabelPropReport load_labelprop_report_csv(const std::string& path) {
    LabelPropReport report;
    std::ifstream in(path);
    if (!in) throw IoError("plot: cannot open " + path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::stringstream ls(line);
        std::string method_s, m_s, acc_s, lacc_s, n_s;
        std::getline(ls, method_s, ',');
        std::getline(ls, m_s, ',');
        std::getline(ls, acc_s, ',');
        std::getline(ls, lacc_s, ',');
        std::getline(ls, n_s, ',');
        LabelPropRow row;
        row.method = method_s == "truncated" ? LabelPropMethod::Truncated
                     : method_s == "srot_hard_partial" ? LabelPropMethod::SrotHardPartial
                                                       : LabelPropMethod::Partial;
        row.m = std::stod(m_s);
        row.accuracy = std::stod(acc_s);
        if (lacc_s != "undefined" && !lacc_s.empty()) row.labeled_accuracy = std::stod(lacc_s);
        row.n_classified = n_s.empty() ? 0 : std::stoi(n_s);
        report.rows.push_back(row);
    }
    return report;
}

int cmd_plot(const std::string& kind, const std::string& data_path, const std::string& plan_path,
             const std::vector<std::string>& trace_dirs, const std::string& report_path,
             const std::string& out_dir) {
    ensure_layout(out_dir);
    if (kind == "plan") {
        if (data_path.empty() || plan_path.empty()) {
            std::cerr << "plot: --kind plan needs --data and --plan\n";
            return 2;
        }
        const ContaminatedDataset ds = load_dataset_csv(data_path);
        const TransportPlan plan = load_plan_json(plan_path);
        plot_plan_svg(ds, plan, (fs::path(out_dir) / "plots" / "plan.svg").string());
    } else if (kind == "trace") {
        if (trace_dirs.empty()) {
            std::cerr << "plot: --kind trace needs at least one --trace dir\n";
            return 2;
        }
        std::vector<FlowTrace> traces;
        for (const auto& dir : trace_dirs) traces.push_back(load_trace_csv(dir));
        plot_traces_svg(traces, (fs::path(out_dir) / "plots" / "traces.svg").string());
    } else if (kind == "labelprop") {
        if (report_path.empty()) {
            std::cerr << "plot: --kind labelprop needs --report\n";
            return 2;
        }
        plot_labelprop_svg(load_labelprop_report_csv(report_path),
                           (fs::path(out_dir) / "plots" / "labelprop.svg").string());
    } else {
        std::cerr << "plot: unknown kind '" << kind << "'\n";
        return 2;
    }
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Outlier-robust optimal transport experiments"};
    app.require_subcommand(1);

    std::string config_path;

    // Shared flag storage; only flags the user actually set are merged.
    std::string out_dir = "out", data_path, preset, mode = "ar", solver_kind = "exact";
    std::uint64_t seed = 0;
    bool force = false;
    int n_clean = 75, n_type1 = 6, n_type2 = 4, n = 1000, dim = 64, n_outlier = 30;
    double kappa = 0.1;
    int epochs = 300, batch_size = 64, power_iters = 1, iters = 400, log_every = 10, max_iters = 10000;
    double omega = 0.001, eta = 0.75, lr_train = 0.005, lr_flow = 0.01;
    double epsilon = 0.01, tau = 1.0, tol = 1e-9, mass = 0.9, lambda = 1.0, rho = 0.1, gamma = 0.0;
    double threshold = 0.25, ce_floor = 1e-6;
    bool rescale = false;
    std::vector<double> tau_grid, mass_grid;
    std::vector<std::string> losses, methods, trace_dirs;
    std::string model_path, srot_base, rot_mode = "partial", plot_kind, plan_path, report_path;
    std::string activation = "relu";
    bool standardize = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file; flags override its keys");
        cmd->add_option("--out", out_dir, "Output directory");
        cmd->add_option("--seed", seed, "Global seed");
    };

    CLI::App* gen = app.add_subcommand("gen", "Generate a dataset preset");
    add_common(gen);
    gen->add_option("--preset", preset, "toy2d | flow2d | highdim");
    gen->add_flag("--force", force, "Overwrite existing dataset files");
    gen->add_option("--n-clean", n_clean, "Clean points per side (toy2d/highdim)");
    gen->add_option("--n-type1", n_type1, "Type-I outliers (toy2d)");
    gen->add_option("--n-type2", n_type2, "Type-II outliers (toy2d)");
    gen->add_option("--n", n, "Points per side (flow2d)");
    gen->add_option("--kappa", kappa, "Contamination fraction (flow2d)");
    gen->add_option("--dim", dim, "Ambient dimension (highdim)");
    gen->add_option("--n-outlier", n_outlier, "Outlier count (highdim)");

    CLI::App* train_cmd = app.add_subcommand("train", "Train the source/target classifier");
    add_common(train_cmd);
    train_cmd->add_option("--data", data_path, "Dataset CSV");
    train_cmd->add_option("--mode", mode, "ce | ar");
    train_cmd->add_option("--epochs", epochs, "Training epochs");
    train_cmd->add_option("--batch-size", batch_size, "Minibatch size");
    train_cmd->add_option("--lr", lr_train, "Adam step size");
    train_cmd->add_option("--omega", omega, "CE weight in the AR loss");
    train_cmd->add_option("--eta", eta, "Adversarial perturbation radius");
    train_cmd->add_option("--power-iters", power_iters, "Power iterations");
    train_cmd->add_option("--activation", activation, "relu | tanh");
    train_cmd->add_flag("--standardize", standardize, "Standardize inputs before training");

    CLI::App* solve = app.add_subcommand("solve", "Run one solver and plot the plan");
    add_common(solve);
    solve->add_option("--data", data_path, "Dataset CSV");
    solve->add_option("--solver", solver_kind,
                      "exact | sinkhorn | uot | partial | truncated | rot | srot-hard | srot-soft");
    solve->add_option("--epsilon", epsilon, "Entropic regularization");
    solve->add_option("--tau", tau_grid, "Marginal penalty; repeat for a sweep (uot)");
    solve->add_option("--tol", tol, "Convergence tolerance");
    solve->add_option("--max-iters", max_iters, "Iteration cap");
    solve->add_option("--mass", mass, "Transported mass (partial)");
    solve->add_option("--lambda", lambda, "Truncation level");
    solve->add_option("--rho", rho, "Trim level (rot)");
    solve->add_option("--rot-mode", rot_mode, "partial | truncated");
    solve->add_option("--model", model_path, "Classifier checkpoint for srot solvers");
    solve->add_option("--srot-base", srot_base, "Base solver for srot variants");
    solve->add_option("--gamma", gamma, "Soft-cost coefficient (0 = auto)");
    solve->add_flag("--rescale", rescale, "Rescale the clean side before a partial solve");
    solve->add_option("--ce-floor", ce_floor, "Inverse-CE floor");
    solve->add_option("--eta", eta, "Adversarial radius when training internally");
    solve->add_option("--epochs", epochs, "Epochs when training internally");

    CLI::App* flow = app.add_subcommand("flow", "Run gradient flows and compare them");
    add_common(flow);
    flow->add_option("--data", data_path, "Dataset CSV");
    flow->add_option("--losses", losses, "wasserstein | sinkhorn | uot | partial | srot_hard | srot_soft");
    flow->add_option("--lr", lr_flow, "Flow learning rate");
    flow->add_option("--iters", iters, "Euler iterations");
    flow->add_option("--log-every", log_every, "Snapshot/eval period");
    flow->add_option("--mass", mass, "Partial mass for partial/srot_soft losses");
    flow->add_option("--epsilon", epsilon, "Entropic regularization (sinkhorn/uot)");
    flow->add_option("--tau", tau, "Marginal penalty (uot)");
    flow->add_option("--eta", eta, "Adversarial radius for the internal classifier");
    flow->add_option("--epochs", epochs, "Epochs for the internal classifier");
    flow->add_option("--activation", activation, "relu | tanh");
    flow->add_flag("--standardize", standardize, "Standardize classifier inputs");

    CLI::App* labelprop = app.add_subcommand("labelprop", "Label propagation sweep");
    add_common(labelprop);
    labelprop->add_option("--methods", methods, "partial | truncated | srot_hard_partial");
    labelprop->add_option("--mass-grid", mass_grid, "Transported-mass grid");
    labelprop->add_option("--threshold", threshold, "Propagation threshold fraction");
    labelprop->add_option("--eta", eta, "Adversarial radius for the internal classifier");
    labelprop->add_option("--epochs", epochs, "Epochs for the internal classifier");
    labelprop->add_option("--activation", activation, "relu | tanh");
    labelprop->add_flag("--standardize", standardize, "Standardize classifier inputs");

    CLI::App* plot = app.add_subcommand("plot", "Re-plot saved artifacts");
    add_common(plot);
    plot->add_option("--kind", plot_kind, "plan | trace | labelprop");
    plot->add_option("--data", data_path, "Dataset CSV (plan)");
    plot->add_option("--plan", plan_path, "Plan JSON (plan)");
    plot->add_option("--trace", trace_dirs, "Trace directory; repeatable (trace)");
    plot->add_option("--report", report_path, "Label propagation report CSV (labelprop)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        json cfg = load_config_file(config_path);
        // Flags override config-file keys; fill defaults for whatever is
        // still missing so the persisted echo is the fully resolved run.
        auto apply = [&](CLI::App* cmd, const std::string& flag, const std::string& section,
                         const std::string& key, const json& value) {
            const bool flagged = cmd->count(flag) > 0;
            const bool present = section.empty() ? cfg.contains(key)
                                                 : cfg.contains(section) && cfg[section].contains(key);
            if (flagged || !present) {
                if (section.empty()) cfg[key] = value;
                else cfg[section][key] = value;
            }
        };

        CLI::App* active = app.get_subcommands().front();
        apply(active, "--out", "", "out", out_dir);
        apply(active, "--seed", "", "seed", seed);

        int rc = 1;
        if (active == gen) {
            apply(gen, "--preset", "dataset", "preset", preset);
            apply(gen, "--force", "dataset", "force", force);
            apply(gen, "--n-clean", "dataset", "n_clean", n_clean);
            apply(gen, "--n-type1", "dataset", "n_type1", n_type1);
            apply(gen, "--n-type2", "dataset", "n_type2", n_type2);
            apply(gen, "--n", "dataset", "n", n);
            apply(gen, "--kappa", "dataset", "kappa", kappa);
            apply(gen, "--dim", "dataset", "dim", dim);
            apply(gen, "--n-outlier", "dataset", "n_outlier", n_outlier);
            rc = cmd_gen(cfg);
        } else if (active == train_cmd) {
            apply(train_cmd, "--data", "dataset", "path", data_path);
            apply(train_cmd, "--mode", "classifier", "mode", mode);
            apply(train_cmd, "--epochs", "classifier", "epochs", epochs);
            apply(train_cmd, "--batch-size", "classifier", "batch_size", batch_size);
            apply(train_cmd, "--lr", "classifier", "lr", lr_train);
            apply(train_cmd, "--omega", "classifier", "omega", omega);
            apply(train_cmd, "--eta", "classifier", "eta", eta);
            apply(train_cmd, "--power-iters", "classifier", "power_iters", power_iters);
            apply(train_cmd, "--activation", "classifier", "activation", activation);
            apply(train_cmd, "--standardize", "classifier", "standardize", standardize);
            rc = cmd_train(cfg);
        } else if (active == solve) {
            apply(solve, "--data", "dataset", "path", data_path);
            apply(solve, "--solver", "solver", "kind", solver_kind);
            apply(solve, "--epsilon", "solver", "epsilon", epsilon);
            if (solve->count("--tau") > 0) cfg["solver"]["tau_grid"] = tau_grid;
            apply(solve, "--tol", "solver", "tol", tol);
            apply(solve, "--max-iters", "solver", "max_iters", max_iters);
            apply(solve, "--mass", "solver", "mass", mass);
            apply(solve, "--lambda", "solver", "lambda", lambda);
            apply(solve, "--rho", "solver", "rho", rho);
            apply(solve, "--rot-mode", "solver", "rot_mode", rot_mode);
            apply(solve, "--model", "solver", "model", model_path);
            if (solve->count("--srot-base") > 0) cfg["srot"]["base"] = srot_base;
            if (solve->count("--gamma") > 0 && gamma > 0.0) cfg["srot"]["gamma"] = gamma;
            apply(solve, "--rescale", "srot", "rescale", rescale);
            apply(solve, "--ce-floor", "srot", "ce_floor", ce_floor);
            apply(solve, "--eta", "classifier", "eta", eta);
            apply(solve, "--epochs", "classifier", "epochs", epochs);
            rc = cmd_solve(cfg);
        } else if (active == flow) {
            apply(flow, "--data", "dataset", "path", data_path);
            apply(flow, "--losses", "flow", "losses", losses);
            apply(flow, "--lr", "flow", "lr", lr_flow);
            apply(flow, "--iters", "flow", "iters", iters);
            apply(flow, "--log-every", "flow", "log_every", log_every);
            apply(flow, "--mass", "flow", "mass", mass);
            apply(flow, "--epsilon", "flow", "epsilon", epsilon);
            apply(flow, "--tau", "flow", "tau", tau);
            apply(flow, "--eta", "classifier", "eta", eta);
            apply(flow, "--epochs", "classifier", "epochs", epochs);
            apply(flow, "--activation", "classifier", "activation", activation);
            apply(flow, "--standardize", "classifier", "standardize", standardize);
            rc = cmd_flow(cfg);
        } else if (active == labelprop) {
            apply(labelprop, "--methods", "labelprop", "methods", methods);
            apply(labelprop, "--mass-grid", "labelprop", "mass_grid", mass_grid);
            apply(labelprop, "--threshold", "labelprop", "threshold", threshold);
            apply(labelprop, "--eta", "classifier", "eta", eta);
            apply(labelprop, "--epochs", "classifier", "epochs", epochs);
            apply(labelprop, "--activation", "classifier", "activation", activation);
            apply(labelprop, "--standardize", "classifier", "standardize", standardize);
            rc = cmd_labelprop(cfg);
        } else if (active == plot) {
            rc = cmd_plot(plot_kind, data_path, plan_path, trace_dirs, report_path,
                          cfg.value("out", out_dir));
        }
        return rc;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace srot
