#pragma once

#include <string>
#include <vector>

#include "l2r/memory.hpp"
#include "l2r/tensor.hpp"

namespace l2r {

struct TrainedState;
class RouterStack;

enum class RelaxationMode { GumbelSigmoid, Softmax };

RelaxationMode relax_from_string(const std::string& s);
std::string relax_to_string(RelaxationMode m);

struct RouterHyper {
    // tuned on validation streams: the memory view is tiny, so the routers
    // need a high rate and many passes to sharpen the gates
    double lr = 0.1;
    int epochs = 60;
    int batch = 8;
    double warmup_frac = 0.1;
};

struct RouterTrainLog {
    std::vector<double> epoch_loss;
    int steps = 0;
};

// Per-layer linear maps from the layer's pooled representation to per-adapter
// allocation scores. Binary gates are relaxed with a Gumbel-sigmoid,
//   zhat = sigmoid(log[sigmoid(z) u / ((1 - sigmoid(z)) (1 - u))] / tau),
// u ~ Uniform(0,1) drawn independently per layer and per component; the
// Softmax mode is the ablation counterpart.
class RouterStack {
public:
    RouterStack(int layers, int tasks, int dim, RelaxationMode mode, double tau, uint64_t seed);

    int layers() const { return static_cast<int>(weights_.size()); }
    int tasks() const { return tasks_; }
    int dim() const { return dim_; }
    RelaxationMode mode() const { return mode_; }
    double tau() const { return tau_; }

    // h_cls: 1 x d graph node; returns a 1 x T node of relaxed scores.
    // stochastic draws come from rng; forced_u (size T) overrides the draws.
    TensorPtr route(int layer, const TensorPtr& h_cls, bool stochastic, Rng* rng = nullptr,
                    const std::vector<double>* forced_u = nullptr) const;

    void set_trainable(bool trainable);
    std::vector<TensorPtr> params() const;

    std::vector<uint8_t> serialize() const;
    void save(const std::string& path) const;
    static RouterStack load(const std::string& path);
    static RouterStack deserialize(const std::vector<uint8_t>& bytes);

private:
    int tasks_, dim_;
    RelaxationMode mode_;
    double tau_;
    std::vector<TensorPtr> weights_;  // T x d per layer
    std::vector<TensorPtr> biases_;   // T per layer
};

// Trains only the stack's parameters on the memory view; backbone, adapters
// and classifier stay frozen. til_task is 1-based for TIL, 0 for CIL.
RouterTrainLog train_routers(RouterStack& stack, const TrainedState& state,
                             const std::vector<MemoryEntry>& view, Regime regime, int til_task,
                             const RouterHyper& hyper, uint64_t seed);

// [layer][adapter][eval_task]: mean deterministic routing score over each eval
// task's test set.
std::vector<std::vector<std::vector<double>>> routing_score_matrix(const RouterStack& stack,
                                                                   const TrainedState& state,
                                                                   const TaskStream& eval_stream);

void export_routing_scores_csv(const std::vector<std::vector<std::vector<double>>>& matrix,
                               const std::string& dir, const std::string& prefix);

}  // namespace l2r
