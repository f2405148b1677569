#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "l2r/adapter.hpp"
#include "l2r/backbone.hpp"
#include "l2r/composer.hpp"
#include "l2r/data.hpp"
#include "l2r/memory.hpp"
#include "l2r/router.hpp"

namespace l2r {

struct TrainHyper {
    // the frozen random-feature encoder needs larger adapter steps than a
    // pretrained backbone would; 3e-4 leaves the adapters nearly inert
    double lr = 1e-2;
    int batch = 8;
    int max_epochs = 30;
    int patience = 3;       // early stop on val accuracy, clocked after warmup
    double warmup_frac = 0.1;
};

struct RunConfig {
    BackboneConfig backbone;
    AdapterConfig adapter;
    double memory_fraction = 0.10;
    RelaxationMode relax = RelaxationMode::GumbelSigmoid;
    double tau = 1.0;
    CompositionKind mode = CompositionKind::Wavg;
    Regime regime = Regime::CIL;
    GeneratorSpec gen;
    std::string ingest_path;  // when set, replaces the generator
    IngestSchema ingest;
    std::string order = "order1";
    uint64_t seed = 1;
    std::string out_dir = "runs";
    TrainHyper train;
    RouterHyper router;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    uint64_t hash() const;
    // sets the master seed and re-derives the backbone/generator sub-seeds
    void reseed(uint64_t master);
    TaskStream make_stream() const;  // generator or JSONL ingest, with order applied
};

struct TrainedState {
    Backbone backbone;
    AdapterBank bank;
    MemoryBuffer memory;
    ClassifierHead global_head;               // union of classes seen so far
    std::vector<ClassifierHead> til_heads;    // snapshot per task
    CentroidSet centroids;
    TaskStream stream;
    RunConfig cfg;
};

struct FlopsEstimate {
    std::string method;
    double flops = 0.0;
};

enum class FlopsMethod { Base, Wavg, Merge, Centroid };
FlopsMethod flops_method_from_string(const std::string& s);

struct RunReport {
    std::string mode, regime, relax;
    std::vector<std::string> task_names;
    std::vector<double> per_task_acc;
    double avg_acc = 0.0;
    std::vector<std::vector<std::vector<double>>> routing;  // [layer][adapter][task]
    std::vector<FlopsEstimate> flops;
    uint64_t config_hash = 0;
    uint64_t seed = 0;

    nlohmann::json to_json() const;
};

CentroidSet compute_centroids(const Backbone& backbone, const TaskStream& stream);

// Sequential protocol: per task, add an adapter, train it jointly with the
// task's classifier columns, populate memory, freeze. RunError (with the task
// id) when a task's loss diverges.
TrainedState run_stream(const TaskStream& stream, const RunConfig& cfg);

RouterStack make_and_train_cil_routers(const TrainedState& state, const RunConfig& cfg,
                                       RouterTrainLog* log = nullptr);
std::vector<RouterStack> make_and_train_til_routers(const TrainedState& state,
                                                    const RunConfig& cfg);

RunReport evaluate(const TrainedState& state, const RouterStack* cil_routers,
                   const std::vector<RouterStack>* til_routers, CompositionKind mode,
                   Regime regime);

// fraction of test examples of task (1-based) classified correctly when only
// that task's adapter and head are active; oracle for Upper-Bound checks
double standalone_task_accuracy(const TrainedState& state, int task_id);

struct SweepRow {
    uint64_t seed;
    double fraction;
    double avg_acc;
};
std::vector<SweepRow> sweep_memory(const RunConfig& base, const std::vector<double>& fractions,
                                   const std::vector<uint64_t>& seeds);

struct AblationResult {
    std::vector<uint64_t> seeds;
    std::vector<double> gumbel_acc, softmax_acc;
    std::vector<std::vector<std::vector<double>>> gumbel_routing, softmax_routing;
    double gumbel_mean = 0.0, softmax_mean = 0.0;
};
AblationResult ablate_relaxation(const RunConfig& base, const std::vector<uint64_t>& seeds);

// Analytic forward FLOP count for batch 1 at the given sequence length; a
// fused multiply-add counts as 2 FLOPs.
FlopsEstimate estimate_flops(const BackboneConfig& cfg, const AdapterConfig& adapter, int tasks,
                             int classes, FlopsMethod method, int seq_len = 128);

}  // namespace l2r
