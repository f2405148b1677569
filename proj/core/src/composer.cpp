#include "l2r/composer.hpp"

#include <algorithm>
#include <cmath>

#include "l2r/router.hpp"

namespace l2r {

CompositionKind composition_from_string(const std::string& s) {
    if (s == "none") return CompositionKind::None;
    if (s == "wavg") return CompositionKind::Wavg;
    if (s == "merge-per-input") return CompositionKind::MergePerInput;
    if (s == "merge" || s == "merge-static") return CompositionKind::MergeStatic;
    if (s == "lower-bound") return CompositionKind::LowerBound;
    if (s == "upper-bound") return CompositionKind::UpperBound;
    if (s == "centroid") return CompositionKind::Centroid;
    throw ConfigError("unknown composition mode: " + s);
}

std::string composition_to_string(CompositionKind k) {
    switch (k) {
        case CompositionKind::None: return "none";
        case CompositionKind::Wavg: return "wavg";
        case CompositionKind::MergePerInput: return "merge-per-input";
        case CompositionKind::MergeStatic: return "merge-static";
        case CompositionKind::LowerBound: return "lower-bound";
        case CompositionKind::UpperBound: return "upper-bound";
        case CompositionKind::Centroid: return "centroid";
    }
    return "?";
}

std::vector<double> centroid_weights(const CentroidSet& set, const std::vector<double>& h_cls) {
    if (set.centroids.empty()) throw ContractError("centroid_weights: no centroids");
    std::vector<double> sims;
    double hn = 0.0;
    for (double v : h_cls) hn += v * v;
    hn = std::sqrt(hn);
    for (const auto& c : set.centroids) {
        if (c.mean_cls.size() != h_cls.size())
            throw ContractError("centroid_weights: dim mismatch");
        double dot = 0.0, cn = 0.0;
        for (size_t i = 0; i < h_cls.size(); ++i) {
            dot += c.mean_cls[i] * h_cls[i];
            cn += c.mean_cls[i] * c.mean_cls[i];
        }
        cn = std::sqrt(cn);
        sims.push_back(hn > 0 && cn > 0 ? dot / (hn * cn) : 0.0);
    }
    // softmax, temperature 1
    double mx = *std::max_element(sims.begin(), sims.end());
    double z = 0.0;
    for (auto& s : sims) z += (s = std::exp(s - mx));
    for (auto& s : sims) s /= z;
    return sims;
}

TensorPtr compose_wavg(const AdapterBank& bank, int layer, Target target,
                       const TensorPtr& weights, const TensorPtr& x, bool training, Rng* rng) {
    int tasks = bank.size();
    if (weights->size() != tasks)
        throw ContractError("compose_wavg: weight length " + std::to_string(weights->size()) +
                            " != adapter count " + std::to_string(tasks));
    TensorPtr acc;
    for (int t = 1; t <= tasks; ++t) {
        const LoraPair& pair = bank.task(t).layers[layer][static_cast<int>(target)];
        auto wt = slice_cols(weights, t - 1, t);  // 1 x 1
        auto term = scale_by(adapter_delta(pair, x, training, rng), wt);
        acc = acc ? add(acc, term) : term;
    }
    return acc;
}

TensorPtr compose_merge(const AdapterBank& bank, int layer, Target target,
                        const TensorPtr& weights, const TensorPtr& x) {
    int tasks = bank.size();
    if (weights->size() != tasks)
        throw ContractError("compose_merge: weight length " + std::to_string(weights->size()) +
                            " != adapter count " + std::to_string(tasks));
    // merged delta weight: sum_t w_t * scale * A_t^T B_t^T (d x d), applied once
    TensorPtr merged;
    for (int t = 1; t <= tasks; ++t) {
        const LoraPair& pair = bank.task(t).layers[layer][static_cast<int>(target)];
        auto m = matmul(transpose(pair.down), transpose(pair.up));  // d x d
        if (pair.scaling != 1.0) m = scale(m, pair.scaling);
        auto wt = slice_cols(weights, t - 1, t);
        auto term = scale_by(m, wt);
        merged = merged ? add(merged, term) : term;
    }
    return matmul(x, merged);
}

TensorPtr compose_baseline(CompositionKind kind, const AdapterBank& bank, int layer,
                           Target target, const TensorPtr& x, int task_id,
                           const std::vector<double>* weights) {
    switch (kind) {
        case CompositionKind::LowerBound: {
            auto w = Tensor::create({1, bank.size()});
            std::fill(w->data.begin(), w->data.end(), 1.0);
            return compose_wavg(bank, layer, target, w, x);
        }
        case CompositionKind::UpperBound: {
            if (task_id < 1)
                throw ContractError("compose_baseline: upper-bound needs a task id");
            return adapter_delta(bank.task(task_id).layers[layer][static_cast<int>(target)], x,
                                 false);
        }
        case CompositionKind::Centroid: {
            if (!weights) throw ContractError("compose_baseline: centroid needs weights");
            return compose_merge(bank, layer, target,
                                 Tensor::from({1, bank.size()}, *weights), x);
        }
        default:
            throw ContractError("compose_baseline: not a baseline kind");
    }
}

TensorPtr compose_delta(const ComposerSpec& spec, int layer, Target target,
                        const TensorPtr& weights, const TensorPtr& x) {
    if (!spec.bank || spec.bank->size() == 0) return nullptr;
    switch (spec.kind) {
        case CompositionKind::None:
            return nullptr;
        case CompositionKind::Wavg:
        case CompositionKind::LowerBound:
            return compose_wavg(*spec.bank, layer, target, weights, x, spec.adapter_training,
                                spec.rng);
        case CompositionKind::MergePerInput:
        case CompositionKind::MergeStatic:
        case CompositionKind::Centroid:
            return compose_merge(*spec.bank, layer, target, weights, x);
        case CompositionKind::UpperBound:
            if (spec.oracle_task < 1)
                throw ContractError("compose_delta: upper-bound needs oracle task id");
            return adapter_delta(
                spec.bank->task(spec.oracle_task).layers[layer][static_cast<int>(target)], x,
                spec.adapter_training, spec.rng);
    }
    return nullptr;
}

}  // namespace l2r
