#pragma once

#include <string>
#include <vector>

#include "l2r/adapter.hpp"
#include "l2r/tensor.hpp"

namespace l2r {

class RouterStack;

enum class CompositionKind {
    None,           // bare backbone
    Wavg,           // weighted average of adapter outputs (learned router)
    MergePerInput,  // weight-space merge recomputed per input's routing
    MergeStatic,    // weight-space merge with fixed weights
    LowerBound,     // uniform sum of all adapter outputs
    UpperBound,     // oracle task adapter only
    Centroid,       // DAM-style similarity weights, merged apply
};

CompositionKind composition_from_string(const std::string& s);
std::string composition_to_string(CompositionKind k);

struct TaskCentroid {
    int task_id = 0;
    std::vector<double> mean_cls;  // mean final-layer [CLS] over the training split
};

struct CentroidSet {
    std::vector<TaskCentroid> centroids;
};

// softmax over cosine similarities between h_cls and each centroid
std::vector<double> centroid_weights(const CentroidSet& set, const std::vector<double>& h_cls);

// How adapters are combined during one encode call. Per-layer routed kinds
// (Wavg, MergePerInput) read `routers`; fixed-weight kinds read
// `fixed_weights`; UpperBound and adapter training read `oracle_task`.
struct ComposerSpec {
    CompositionKind kind = CompositionKind::None;
    const AdapterBank* bank = nullptr;
    const RouterStack* routers = nullptr;
    bool stochastic = false;
    Rng* rng = nullptr;                          // stochastic routing + adapter dropout
    const std::vector<double>* forced_u = nullptr;  // test hook for gumbel draws
    std::vector<double> fixed_weights;
    int oracle_task = 0;            // 1-based
    bool adapter_training = false;  // enables adapter-path dropout
};

// sum_t w_t * adapter_delta(A_t, x); weights is a 1 x T graph node
TensorPtr compose_wavg(const AdapterBank& bank, int layer, Target target,
                       const TensorPtr& weights, const TensorPtr& x, bool training = false,
                       Rng* rng = nullptr);

// merged delta-weight route: x @ (sum_t w_t * scale * A_t^T B_t^T)
TensorPtr compose_merge(const AdapterBank& bank, int layer, Target target,
                        const TensorPtr& weights, const TensorPtr& x);

// LowerBound, UpperBound, Centroid deltas for one (layer, target)
TensorPtr compose_baseline(CompositionKind kind, const AdapterBank& bank, int layer,
                           Target target, const TensorPtr& x, int task_id = 0,
                           const std::vector<double>* weights = nullptr);

// dispatcher used by Backbone::encode; weights may be null for oracle kinds
TensorPtr compose_delta(const ComposerSpec& spec, int layer, Target target,
                        const TensorPtr& weights, const TensorPtr& x);

}  // namespace l2r
