#include "l2r/router.hpp"

#include <algorithm>
#include <cmath>

#include "l2r/harness.hpp"
#include "l2r/optim.hpp"
#include "l2r/serialize.hpp"

namespace l2r {

namespace {
constexpr double kUClamp = 1e-6;
}

RelaxationMode relax_from_string(const std::string& s) {
    if (s == "gumbel-sigmoid") return RelaxationMode::GumbelSigmoid;
    if (s == "softmax") return RelaxationMode::Softmax;
    throw ConfigError("unknown relaxation mode: " + s);
}

std::string relax_to_string(RelaxationMode m) {
    return m == RelaxationMode::GumbelSigmoid ? "gumbel-sigmoid" : "softmax";
}

RouterStack::RouterStack(int layers, int tasks, int dim, RelaxationMode mode, double tau,
                         uint64_t seed)
    : tasks_(tasks), dim_(dim), mode_(mode), tau_(tau) {
    if (tau <= 0.0) throw ConfigError("router temperature must be > 0, got " + std::to_string(tau));
    if (layers < 1 || tasks < 1 || dim < 1) throw ConfigError("router: bad dimensions");
    (void)seed;
    for (int l = 0; l < layers; ++l) {
        weights_.push_back(Tensor::create({tasks, dim}));
        biases_.push_back(Tensor::create({tasks}));
    }
}

TensorPtr RouterStack::route(int layer, const TensorPtr& h_cls, bool stochastic, Rng* rng,
                             const std::vector<double>* forced_u) const {
    if (layer < 0 || layer >= layers())
        throw ContractError("route: layer " + std::to_string(layer) + " out of range");
    auto z = add(matmul(h_cls, transpose(weights_[layer])), biases_[layer]);  // 1 x T
    if (mode_ == RelaxationMode::Softmax) return softmax(scale(z, 1.0 / tau_));
    if (stochastic || forced_u) {
        // zhat = sigmoid((z + log(u/(1-u))) / tau); the log-ratio form collapses
        // to this because log[sigma(z)/(1-sigma(z))] = z
        if (forced_u && static_cast<int>(forced_u->size()) != tasks_)
            throw ContractError("route: forced_u length mismatch");
        if (!forced_u && !rng) throw ContractError("route: stochastic draw needs an rng");
        auto noise = Tensor::create({1, tasks_});
        for (int t = 0; t < tasks_; ++t) {
            double u = forced_u ? (*forced_u)[t] : rng->uniform();
            u = std::clamp(u, kUClamp, 1.0 - kUClamp);
            noise->data[t] = std::log(u / (1.0 - u));
        }
        return sigmoid(scale(add(z, noise), 1.0 / tau_));
    }
    return sigmoid(scale(z, 1.0 / tau_));
}

void RouterStack::set_trainable(bool trainable) {
    for (auto& w : weights_) w->requires_grad = trainable;
    for (auto& b : biases_) b->requires_grad = trainable;
}

std::vector<TensorPtr> RouterStack::params() const {
    std::vector<TensorPtr> out;
    for (size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(weights_[l]);
        out.push_back(biases_[l]);
    }
    return out;
}

std::vector<uint8_t> RouterStack::serialize() const {
    std::vector<NamedTensor> tensors;
    for (size_t l = 0; l < weights_.size(); ++l) {
        tensors.push_back({"layer" + std::to_string(l) + ".w", weights_[l]});
        tensors.push_back({"layer" + std::to_string(l) + ".b", biases_[l]});
    }
    json meta = {{"layers", layers()}, {"tasks", tasks_},       {"dim", dim_},
                 {"mode", relax_to_string(mode_)}, {"tau", tau_}};
    return pack_tensors(tensors, meta);
}

void RouterStack::save(const std::string& path) const { write_file_atomic(path, serialize()); }

RouterStack RouterStack::deserialize(const std::vector<uint8_t>& bytes) {
    PackedTensors packed = unpack_tensors(bytes);
    RouterStack stack(packed.meta.at("layers"), packed.meta.at("tasks"), packed.meta.at("dim"),
                      relax_from_string(packed.meta.at("mode")), packed.meta.at("tau"), 0);
    for (int l = 0; l < stack.layers(); ++l) {
        stack.weights_[l]->data = packed.tensors[2 * l].tensor->data;
        stack.biases_[l]->data = packed.tensors[2 * l + 1].tensor->data;
    }
    return stack;
}

RouterStack RouterStack::load(const std::string& path) { return deserialize(read_file(path)); }

RouterTrainLog train_routers(RouterStack& stack, const TrainedState& state,
                             const std::vector<MemoryEntry>& view, Regime regime, int til_task,
                             const RouterHyper& hyper, uint64_t seed) {
    if (view.empty()) throw ContractError("train_routers: empty memory view");
    if (regime == Regime::TIL && til_task < 1)
        throw ContractError("train_routers: TIL needs a task id");

    const ClassifierHead& head =
        regime == Regime::CIL ? state.global_head : state.til_heads[til_task - 1];

    stack.set_trainable(true);
    AdamW::Options opt;
    opt.lr = hyper.lr;
    AdamW optimizer(stack.params(), opt);

    Rng rng(derive_seed(seed, "router_train", static_cast<uint64_t>(til_task)));
    std::vector<int> order(view.size());
    std::iota(order.begin(), order.end(), 0);

    int64_t steps_per_epoch = (static_cast<int64_t>(view.size()) + hyper.batch - 1) / hyper.batch;
    LinearWarmupSchedule sched(hyper.lr,
                               std::max<int64_t>(1, static_cast<int64_t>(
                                   hyper.warmup_frac * hyper.epochs * steps_per_epoch)),
                               hyper.epochs * steps_per_epoch);

    RouterTrainLog log;
    Tape tape;
    int64_t step = 0;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += hyper.batch) {
            size_t end = std::min(order.size(), start + hyper.batch);
            optimizer.zero_grad();
            for (size_t i = start; i < end; ++i) {
                const MemoryEntry& e = view[order[i]];
                TapeScope scope(tape);
                ComposerSpec spec;
                spec.kind = CompositionKind::Wavg;
                spec.bank = &state.bank;
                spec.routers = &stack;
                spec.stochastic = true;
                spec.rng = &rng;
                auto res = state.backbone.encode(e.tokens, &spec, &head);
                int label = regime == Regime::CIL ? e.global_label : e.label;
                auto loss = scale(cross_entropy(res.logits, label),
                                  1.0 / static_cast<double>(end - start));
                backward(tape, loss);
                epoch_loss += loss->item() * static_cast<double>(end - start);
                tape.clear();
            }
            optimizer.set_lr(sched.lr_at(step++));
            optimizer.step();
            ++log.steps;
        }
        log.epoch_loss.push_back(epoch_loss / static_cast<double>(view.size()));
    }
    stack.set_trainable(false);
    return log;
}

std::vector<std::vector<std::vector<double>>> routing_score_matrix(const RouterStack& stack,
                                                                   const TrainedState& state,
                                                                   const TaskStream& eval_stream) {
    int L = stack.layers(), T = stack.tasks();
    int E = static_cast<int>(eval_stream.tasks.size());
    std::vector<std::vector<std::vector<double>>> matrix(
        L, std::vector<std::vector<double>>(T, std::vector<double>(E, 0.0)));
    for (int j = 0; j < E; ++j) {
        const auto& test = eval_stream.tasks[j].test.examples;
        if (test.empty()) throw ContractError("routing_score_matrix: empty test split");
        for (const auto& e : test) {
            ComposerSpec spec;
            spec.kind = CompositionKind::Wavg;
            spec.bank = &state.bank;
            spec.routers = &stack;
            spec.stochastic = false;
            auto res = state.backbone.encode(e.tokens, &spec, nullptr);
            for (int l = 0; l < L; ++l)
                for (int t = 0; t < T; ++t) matrix[l][t][j] += res.routing[l][t];
        }
        for (int l = 0; l < L; ++l)
            for (int t = 0; t < T; ++t) matrix[l][t][j] /= static_cast<double>(test.size());
    }
    return matrix;
}

void export_routing_scores_csv(const std::vector<std::vector<std::vector<double>>>& matrix,
                               const std::string& dir, const std::string& prefix) {
    for (size_t l = 0; l < matrix.size(); ++l) {
        std::vector<std::string> header{"adapter"};
        if (!matrix[l].empty())
            for (size_t j = 0; j < matrix[l][0].size(); ++j)
                header.push_back("task" + std::to_string(j + 1));
        std::vector<std::vector<std::string>> rows;
        for (size_t t = 0; t < matrix[l].size(); ++t) {
            std::vector<std::string> row{std::to_string(t + 1)};
            for (double v : matrix[l][t]) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.6f", v);
                row.push_back(buf);
            }
            rows.push_back(std::move(row));
        }
        write_csv(dir + "/" + prefix + "_layer" + std::to_string(l) + ".csv", header, rows);
    }
}

}  // namespace l2r
