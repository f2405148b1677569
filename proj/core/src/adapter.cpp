#include "l2r/adapter.hpp"

#include <cmath>

#include "l2r/backbone.hpp"
#include "l2r/serialize.hpp"

namespace l2r {

TensorPtr adapter_delta(const LoraPair& pair, const TensorPtr& x, bool training, Rng* rng) {
    if (x->cols() != pair.down->cols())
        throw ContractError("adapter_delta: input width " + std::to_string(x->cols()) +
                            " != adapter dim " + std::to_string(pair.down->cols()));
    TensorPtr h = x;
    if (training && pair.dropout_rate > 0.0) {
        if (!rng) throw ContractError("adapter_delta: training dropout needs an rng");
        h = dropout(h, pair.dropout_rate, *rng, true);
    }
    auto low = matmul(h, transpose(pair.down));        // s x r
    auto out = matmul(low, transpose(pair.up));        // s x d
    return pair.scaling == 1.0 ? out : scale(out, pair.scaling);
}

int AdapterBank::add_task_adapter(const BackboneConfig& backbone_cfg) {
    backbone_cfg.validate();
    if (cfg_.rank < 1 || cfg_.rank > backbone_cfg.dim)
        throw ConfigError("adapter rank must be in [1, dim], got " + std::to_string(cfg_.rank));
    int task_id = static_cast<int>(adapters_.size()) + 1;
    TaskAdapter ta;
    ta.task_id = task_id;
    int d = backbone_cfg.dim, r = cfg_.rank;
    double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (int l = 0; l < backbone_cfg.layers; ++l) {
        std::array<LoraPair, kNumTargets> pairs;
        for (int t = 0; t < kNumTargets; ++t) {
            Rng rng(derive_seed(seed_, "lora_init", static_cast<uint64_t>(task_id) * 1000 + l, t));
            auto down = Tensor::create({r, d});
            for (auto& v : down->data) v = rng.uniform(-bound, bound);
            auto up = Tensor::create({d, r});  // zero: exact identity at creation
            pairs[t] = LoraPair{down, up, r, cfg_.scaling(), cfg_.dropout};
        }
        ta.layers.push_back(std::move(pairs));
    }
    adapters_.push_back(std::move(ta));
    freeze_all();
    trainable_ = task_id;
    for (auto& layer : adapters_.back().layers)
        for (auto& pair : layer) {
            pair.down->requires_grad = true;
            pair.up->requires_grad = true;
        }
    return task_id;
}

const TaskAdapter& AdapterBank::task(int task_id) const {
    if (task_id < 1 || task_id > size())
        throw ContractError("AdapterBank: no task " + std::to_string(task_id));
    return adapters_[task_id - 1];
}

void AdapterBank::freeze_all() {
    for (auto& ta : adapters_)
        for (auto& layer : ta.layers)
            for (auto& pair : layer) {
                pair.down->requires_grad = false;
                pair.up->requires_grad = false;
            }
    trainable_ = 0;
}

std::vector<TensorPtr> AdapterBank::trainable_params() const {
    std::vector<TensorPtr> out;
    if (trainable_ == 0) return out;
    for (const auto& layer : adapters_[trainable_ - 1].layers)
        for (const auto& pair : layer) {
            out.push_back(pair.down);
            out.push_back(pair.up);
        }
    return out;
}

int64_t AdapterBank::params_per_task() const {
    if (adapters_.empty()) return 0;
    int64_t n = 0;
    for (const auto& layer : adapters_[0].layers)
        for (const auto& pair : layer) n += pair.down->size() + pair.up->size();
    return n;
}

double AdapterBank::parameter_fraction(const Backbone& backbone) const {
    return static_cast<double>(params_per_task()) /
           static_cast<double>(backbone.param_count());
}

std::vector<uint8_t> AdapterBank::serialize_task(int task_id) const {
    const TaskAdapter& ta = task(task_id);
    std::vector<NamedTensor> tensors;
    for (size_t l = 0; l < ta.layers.size(); ++l)
        for (int t = 0; t < kNumTargets; ++t) {
            std::string base = "layer" + std::to_string(l) + (t == 0 ? ".wq" : ".wv");
            tensors.push_back({base + ".down", ta.layers[l][t].down});
            tensors.push_back({base + ".up", ta.layers[l][t].up});
        }
    json meta = {{"task_id", ta.task_id},
                 {"rank", cfg_.rank},
                 {"dropout", cfg_.dropout},
                 {"scaling", cfg_.scaling()}};
    return pack_tensors(tensors, meta);
}

void AdapterBank::save_task(const std::string& path, int task_id) const {
    write_file_atomic(path, serialize_task(task_id));
}

int AdapterBank::load_task(const std::vector<uint8_t>& bytes, const BackboneConfig& backbone_cfg) {
    PackedTensors packed = unpack_tensors(bytes);
    int task_id = static_cast<int>(adapters_.size()) + 1;
    TaskAdapter ta;
    ta.task_id = task_id;
    int idx = 0;
    for (int l = 0; l < backbone_cfg.layers; ++l) {
        std::array<LoraPair, kNumTargets> pairs;
        for (int t = 0; t < kNumTargets; ++t) {
            if (idx + 1 >= static_cast<int>(packed.tensors.size()))
                throw ParseError("adapter file: missing tensors");
            pairs[t] = LoraPair{packed.tensors[idx].tensor, packed.tensors[idx + 1].tensor,
                                cfg_.rank, cfg_.scaling(), cfg_.dropout};
            idx += 2;
        }
        ta.layers.push_back(std::move(pairs));
    }
    adapters_.push_back(std::move(ta));
    return task_id;
}

int AdapterBank::load_task_file(const std::string& path, const BackboneConfig& backbone_cfg) {
    return load_task(read_file(path), backbone_cfg);
}

}  // namespace l2r
