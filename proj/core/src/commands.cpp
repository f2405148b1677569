#include "l2r/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <thread>

#include "l2r/serialize.hpp"

namespace l2r {

namespace fs = std::filesystem;

namespace runfiles {
std::string adapter(int task_id) { return "adapter_task" + std::to_string(task_id) + ".bin"; }
std::string til_routers(int task_id) {
    return "routers_til_task" + std::to_string(task_id) + ".bin";
}
}  // namespace runfiles

RunConfig load_run_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return RunConfig::from_json(j);
}

namespace {

void save_heads(const std::string& path, const TrainedState& state) {
    std::vector<NamedTensor> tensors;
    tensors.push_back({"global.w", state.global_head.weight});
    tensors.push_back({"global.b", state.global_head.bias});
    for (size_t t = 0; t < state.til_heads.size(); ++t) {
        tensors.push_back({"til" + std::to_string(t + 1) + ".w", state.til_heads[t].weight});
        tensors.push_back({"til" + std::to_string(t + 1) + ".b", state.til_heads[t].bias});
    }
    json meta = {{"tasks", state.til_heads.size()}};
    write_file_atomic(path, pack_tensors(tensors, meta));
}

void print_report(const RunReport& rep, std::ostream& out) {
    out << std::left << std::setw(16) << "method";
    for (const auto& name : rep.task_names) out << std::setw(10) << name;
    out << std::setw(10) << "avg" << "\n";
    out << std::left << std::setw(16) << (rep.mode + "/" + rep.regime);
    out << std::fixed << std::setprecision(4);
    for (double a : rep.per_task_acc) out << std::setw(10) << a;
    out << std::setw(10) << rep.avg_acc << "\n";
}

}  // namespace

std::string cmd_train(const RunConfig& cfg) {
    cfg.backbone.validate();
    TaskStream stream = cfg.make_stream();
    TrainedState state = run_stream(stream, cfg);
    RouterStack cil = make_and_train_cil_routers(state, cfg);
    std::vector<RouterStack> til = make_and_train_til_routers(state, cfg);
    RunReport report = evaluate(state, &cil, &til, cfg.mode, cfg.regime);

    std::string run_dir = cfg.out_dir + "/" + hash_hex(cfg.hash());
    fs::create_directories(run_dir);
    write_file_atomic(run_dir + "/" + runfiles::kConfig, cfg.to_json().dump(2) + "\n");
    export_jsonl(stream, run_dir + "/" + runfiles::kStream);
    state.backbone.save(run_dir + "/" + runfiles::kBackbone);
    for (int t = 1; t <= state.bank.size(); ++t)
        state.bank.save_task(run_dir + "/" + runfiles::adapter(t), t);
    save_heads(run_dir + "/" + runfiles::kHeads, state);
    state.memory.save_jsonl(run_dir + "/" + runfiles::kMemory);
    cil.save(run_dir + "/" + runfiles::kCilRouters);
    for (size_t t = 0; t < til.size(); ++t)
        til[t].save(run_dir + "/" + runfiles::til_routers(static_cast<int>(t) + 1));
    write_file_atomic(run_dir + "/" + runfiles::kReport, report.to_json().dump(2) + "\n");
    export_routing_scores_csv(report.routing, run_dir, "routing_scores");
    return run_dir;
}

LoadedRun load_run(const std::string& run_dir) {
    RunConfig cfg = load_run_config(run_dir + "/" + runfiles::kConfig);

    IngestSchema schema;
    schema.max_seq_len = cfg.backbone.max_seq;
    TaskStream stream = ingest_jsonl(run_dir + "/" + runfiles::kStream, schema);
    stream.order_id = cfg.order;

    Backbone backbone = Backbone::load(run_dir + "/" + runfiles::kBackbone);
    AdapterBank bank(cfg.adapter, derive_seed(cfg.seed, "adapters"));
    for (size_t t = 1; t <= stream.tasks.size(); ++t)
        bank.load_task_file(run_dir + "/" + runfiles::adapter(static_cast<int>(t)), cfg.backbone);

    PackedTensors heads = unpack_tensors(read_file(run_dir + "/" + runfiles::kHeads));
    ClassifierHead global;
    std::vector<ClassifierHead> til_heads;
    for (const auto& nt : heads.tensors) {
        if (nt.name == "global.w") global.weight = nt.tensor;
        else if (nt.name == "global.b") global.bias = nt.tensor;
        else if (nt.name.ends_with(".w")) til_heads.push_back({nt.tensor, nullptr});
        else til_heads.back().bias = nt.tensor;
    }

    MemoryBuffer memory = MemoryBuffer::load_jsonl(run_dir + "/" + runfiles::kMemory,
                                                   cfg.memory_fraction,
                                                   derive_seed(cfg.seed, "memory"));
    CentroidSet centroids = compute_centroids(backbone, stream);

    LoadedRun run{TrainedState{std::move(backbone), std::move(bank), std::move(memory),
                               std::move(global), std::move(til_heads), std::move(centroids),
                               std::move(stream), cfg},
                  RouterStack::load(run_dir + "/" + runfiles::kCilRouters),
                  {}};
    for (size_t t = 1; t <= run.state.stream.tasks.size(); ++t)
        run.til_routers.push_back(
            RouterStack::load(run_dir + "/" + runfiles::til_routers(static_cast<int>(t))));
    return run;
}

RunReport cmd_eval(const std::string& run_dir, CompositionKind mode, Regime regime,
                   std::ostream& out) {
    LoadedRun run = load_run(run_dir);
    RunReport report = evaluate(run.state, &run.cil_routers, &run.til_routers, mode, regime);
    print_report(report, out);
    return report;
}

std::string cmd_sweep(const RunConfig& cfg, const std::vector<double>& fractions,
                      const std::vector<uint64_t>& seeds, int workers, std::ostream& out) {
    std::vector<SweepRow> rows;
    if (workers <= 1 || seeds.size() <= 1) {
        rows = sweep_memory(cfg, fractions, seeds);
    } else {
        std::mutex mu;
        std::vector<std::thread> pool;
        int nw = std::min<int>(workers, static_cast<int>(seeds.size()));
        for (int w = 0; w < nw; ++w) {
            pool.emplace_back([&, w] {
                for (size_t i = w; i < seeds.size(); i += nw) {
                    auto part = sweep_memory(cfg, fractions, {seeds[i]});
                    std::lock_guard<std::mutex> lock(mu);
                    rows.insert(rows.end(), part.begin(), part.end());
                }
            });
        }
        for (auto& t : pool) t.join();
        auto pos = [&](uint64_t s) {
            return std::find(seeds.begin(), seeds.end(), s) - seeds.begin();
        };
        std::sort(rows.begin(), rows.end(), [&](const SweepRow& a, const SweepRow& b) {
            return std::make_pair(pos(a.seed), a.fraction) <
                   std::make_pair(pos(b.seed), b.fraction);
        });
    }

    std::string run_dir = cfg.out_dir + "/" + hash_hex(cfg.hash()) + "-sweep";
    fs::create_directories(run_dir);
    write_file_atomic(run_dir + "/" + runfiles::kConfig, cfg.to_json().dump(2) + "\n");
    std::vector<std::vector<std::string>> csv;
    for (const auto& r : rows) {
        char frac[32], acc[32];
        std::snprintf(frac, sizeof(frac), "%.4f", r.fraction);
        std::snprintf(acc, sizeof(acc), "%.6f", r.avg_acc);
        csv.push_back({std::to_string(r.seed), frac, acc});
    }
    write_csv(run_dir + "/memory_sweep.csv", {"seed", "fraction", "avg_acc"}, csv);
    out << "sweep rows: " << rows.size() << " -> " << run_dir << "/memory_sweep.csv\n";
    return run_dir;
}

std::string cmd_ablate(const RunConfig& cfg, const std::vector<uint64_t>& seeds,
                       std::ostream& out) {
    AblationResult res = ablate_relaxation(cfg, seeds);
    std::string run_dir = cfg.out_dir + "/" + hash_hex(cfg.hash()) + "-ablate";
    fs::create_directories(run_dir);
    write_file_atomic(run_dir + "/" + runfiles::kConfig, cfg.to_json().dump(2) + "\n");
    std::vector<std::vector<std::string>> csv;
    for (size_t i = 0; i < res.seeds.size(); ++i) {
        char g[32], s[32];
        std::snprintf(g, sizeof(g), "%.6f", res.gumbel_acc[i]);
        std::snprintf(s, sizeof(s), "%.6f", res.softmax_acc[i]);
        csv.push_back({std::to_string(res.seeds[i]), g, s});
    }
    write_csv(run_dir + "/relaxation_ablation.csv", {"seed", "gumbel_sigmoid", "softmax"}, csv);
    export_routing_scores_csv(res.gumbel_routing, run_dir, "routing_scores_gumbel");
    export_routing_scores_csv(res.softmax_routing, run_dir, "routing_scores_softmax");
    json summary = {{"gumbel_mean", res.gumbel_mean}, {"softmax_mean", res.softmax_mean}};
    write_file_atomic(run_dir + "/ablation_summary.json", summary.dump(2) + "\n");
    out << "gumbel mean " << res.gumbel_mean << " vs softmax mean " << res.softmax_mean << " -> "
        << run_dir << "\n";
    return run_dir;
}

void cmd_flops(const RunConfig& cfg, int tasks, std::ostream& out) {
    int classes = tasks * cfg.gen.classes_per_task;
    out << std::left << std::setw(12) << "method" << "flops\n";
    for (auto m : {FlopsMethod::Base, FlopsMethod::Merge, FlopsMethod::Centroid,
                   FlopsMethod::Wavg}) {
        FlopsEstimate est = estimate_flops(cfg.backbone, cfg.adapter, tasks, classes, m);
        out << std::left << std::setw(12) << est.method << std::fixed << std::setprecision(0)
            << est.flops << "\n";
    }
}

void cmd_export_routing_scores(const std::string& run_dir, std::ostream& out) {
    LoadedRun run = load_run(run_dir);
    auto matrix = routing_score_matrix(run.cil_routers, run.state, run.state.stream);
    export_routing_scores_csv(matrix, run_dir, "routing_scores");
    out << "routing scores -> " << run_dir << "/routing_scores_layer*.csv\n";
}

}  // namespace l2r
