// Command-line front end for the continual-learning toolkit.
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "l2r/commands.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string family, mode, regime, relax, order, out_dir;
    int tasks = -1, classes = -1, rank = -1, layers = -1, dim = -1;
    double memory_fraction = -1.0, tau = -1.0, noise = -1.0;
    long long seed = -1;
    std::string ingest_path;
};

void add_common(CLI::App* app, CommonOpts& o) {
    app->add_option("--config", o.config_path, "JSON config file; flags override its fields");
    app->add_option("--family", o.family,
                    "generator family: far-domain|near-domain|multilingual|hierarchical");
    app->add_option("--tasks", o.tasks, "number of tasks");
    app->add_option("--classes-per-task", o.classes, "classes per task");
    app->add_option("--rank", o.rank, "adapter rank");
    app->add_option("--layers", o.layers, "encoder layers");
    app->add_option("--dim", o.dim, "model width");
    app->add_option("--memory-fraction", o.memory_fraction, "memory sampling fraction p");
    app->add_option("--tau", o.tau, "relaxation temperature");
    app->add_option("--noise", o.noise, "generator token noise rate");
    app->add_option("--mode", o.mode,
                    "composition: wavg|merge-per-input|merge|lower-bound|upper-bound|centroid");
    app->add_option("--regime", o.regime, "evaluation regime: CIL|TIL");
    app->add_option("--relax", o.relax, "router relaxation: gumbel-sigmoid|softmax");
    app->add_option("--order", o.order, "task order: order1|order2|order3|\"3,1,2\"");
    app->add_option("--seed", o.seed, "master seed");
    app->add_option("--out-dir", o.out_dir, "output root for run directories");
    app->add_option("--ingest", o.ingest_path, "JSONL dataset path (replaces the generator)");
}

l2r::RunConfig build_config(const CommonOpts& o) {
    l2r::RunConfig cfg;
    if (!o.config_path.empty()) cfg = l2r::load_run_config(o.config_path);

    if (!o.family.empty()) cfg.gen.family = l2r::family_from_string(o.family);
    if (o.tasks > 0) cfg.gen.tasks = o.tasks;
    if (o.classes > 0) cfg.gen.classes_per_task = o.classes;
    if (o.rank > 0) cfg.adapter.rank = o.rank;
    if (o.layers > 0) cfg.backbone.layers = o.layers;
    if (o.dim > 0) cfg.backbone.dim = o.dim;
    if (o.memory_fraction >= 0.0) cfg.memory_fraction = o.memory_fraction;
    if (o.tau > 0.0) cfg.tau = o.tau;
    if (o.noise >= 0.0) cfg.gen.noise_rate = o.noise;
    if (!o.mode.empty()) cfg.mode = l2r::composition_from_string(o.mode);
    if (!o.regime.empty()) {
        if (o.regime != "CIL" && o.regime != "TIL")
            throw l2r::ConfigError("regime must be CIL or TIL, got " + o.regime);
        cfg.regime = o.regime == "CIL" ? l2r::Regime::CIL : l2r::Regime::TIL;
    }
    if (!o.relax.empty()) cfg.relax = l2r::relax_from_string(o.relax);
    if (!o.order.empty()) cfg.order = o.order;
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (!o.ingest_path.empty()) cfg.ingest_path = o.ingest_path;

    // environment overrides, applied after file and flags
    if (const char* env = std::getenv("L2R_OUTPUT_ROOT")) cfg.out_dir = env;
    uint64_t master = cfg.seed;
    if (o.seed >= 0) master = static_cast<uint64_t>(o.seed);
    if (const char* env = std::getenv("L2R_SEED")) master = std::stoull(env);
    cfg.reseed(master);
    return cfg;
}

std::vector<uint64_t> parse_seeds(const std::vector<long long>& in) {
    std::vector<uint64_t> out;
    for (long long s : in) out.push_back(static_cast<uint64_t>(s));
    if (out.empty()) out = {1, 2, 3};
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual learning with routed low-rank adapters"};
    app.require_subcommand(1);

    CommonOpts train_o, sweep_o, ablate_o, flops_o;
    std::string eval_dir, eval_mode = "wavg", eval_regime = "CIL", export_dir;
    std::vector<double> sweep_fractions{0.01, 0.05, 0.10, 0.30};
    std::vector<long long> sweep_seeds, ablate_seeds;
    int workers = 1, flops_tasks = 5;

    auto* train = app.add_subcommand("train", "train a task stream end to end");
    add_common(train, train_o);

    auto* eval = app.add_subcommand("eval", "re-evaluate a saved run");
    eval->add_option("run_dir", eval_dir, "run directory")->required();
    eval->add_option("--mode", eval_mode, "composition mode");
    eval->add_option("--regime", eval_regime, "CIL|TIL");

    auto* sweep = app.add_subcommand("sweep-memory", "accuracy across memory fractions");
    add_common(sweep, sweep_o);
    sweep->add_option("--fractions", sweep_fractions, "memory fractions to sweep");
    sweep->add_option("--seeds", sweep_seeds, "seeds (default 1 2 3)");
    sweep->add_option("--workers", workers, "parallel workers over seeds");

    auto* ablate = app.add_subcommand("ablate-relaxation", "gumbel-sigmoid vs softmax routers");
    add_common(ablate, ablate_o);
    ablate->add_option("--seeds", ablate_seeds, "seeds (default 1 2 3)");

    auto* flops = app.add_subcommand("flops", "analytic forward-pass FLOPs table");
    add_common(flops, flops_o);
    flops->add_option("--flops-tasks", flops_tasks, "number of adapters in the table");

    auto* exp = app.add_subcommand("export-routing-scores", "per-layer routing score CSVs");
    exp->add_option("run_dir", export_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            std::string dir = l2r::cmd_train(build_config(train_o));
            std::cout << "run dir: " << dir << "\n";
            l2r::cmd_eval(dir, build_config(train_o).mode, build_config(train_o).regime,
                          std::cout);
        } else if (eval->parsed()) {
            if (eval_regime != "CIL" && eval_regime != "TIL")
                throw l2r::ConfigError("regime must be CIL or TIL, got " + eval_regime);
            l2r::cmd_eval(eval_dir, l2r::composition_from_string(eval_mode),
                          eval_regime == "CIL" ? l2r::Regime::CIL : l2r::Regime::TIL, std::cout);
        } else if (sweep->parsed()) {
            l2r::cmd_sweep(build_config(sweep_o), sweep_fractions, parse_seeds(sweep_seeds),
                           workers, std::cout);
        } else if (ablate->parsed()) {
            l2r::cmd_ablate(build_config(ablate_o), parse_seeds(ablate_seeds), std::cout);
        } else if (flops->parsed()) {
            l2r::cmd_flops(build_config(flops_o), flops_tasks, std::cout);
        } else if (exp->parsed()) {
            l2r::cmd_export_routing_scores(export_dir, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
