#include "l2r/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "l2r/optim.hpp"
#include "l2r/serialize.hpp"

namespace l2r {

using nlohmann::json;

FlopsMethod flops_method_from_string(const std::string& s) {
    if (s == "base") return FlopsMethod::Base;
    if (s == "wavg") return FlopsMethod::Wavg;
    if (s == "merge") return FlopsMethod::Merge;
    if (s == "centroid") return FlopsMethod::Centroid;
    throw ConfigError("unknown flops method: " + s);
}

json RunConfig::to_json() const {
    json j;
    j["backbone"] = {{"layers", backbone.layers},   {"dim", backbone.dim},
                     {"heads", backbone.heads},     {"ffn_dim", backbone.ffn_dim},
                     {"vocab_size", backbone.vocab_size}, {"max_seq", backbone.max_seq},
                     {"seed", backbone.seed}};
    j["adapter"] = {{"rank", adapter.rank}, {"dropout", adapter.dropout}};
    j["memory_fraction"] = memory_fraction;
    j["relax"] = relax_to_string(relax);
    j["tau"] = tau;
    j["mode"] = composition_to_string(mode);
    j["regime"] = regime_name(regime);
    j["generator"] = {{"family", family_to_string(gen.family)},
                      {"tasks", gen.tasks},
                      {"classes_per_task", gen.classes_per_task},
                      {"train_examples", gen.train_examples},
                      {"val_examples", gen.val_examples},
                      {"test_examples", gen.test_examples},
                      {"vocab_size", gen.vocab_size},
                      {"seq_len", gen.seq_len},
                      {"noise_rate", gen.noise_rate},
                      {"seed", gen.seed}};
    j["ingest_path"] = ingest_path;
    j["order"] = order;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["train"] = {{"lr", train.lr},
                  {"batch", train.batch},
                  {"max_epochs", train.max_epochs},
                  {"patience", train.patience},
                  {"warmup_frac", train.warmup_frac}};
    j["router"] = {{"lr", router.lr},
                   {"epochs", router.epochs},
                   {"batch", router.batch},
                   {"warmup_frac", router.warmup_frac}};
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    if (j.contains("backbone")) {
        const auto& b = j["backbone"];
        c.backbone.layers = b.value("layers", c.backbone.layers);
        c.backbone.dim = b.value("dim", c.backbone.dim);
        c.backbone.heads = b.value("heads", c.backbone.heads);
        c.backbone.ffn_dim = b.value("ffn_dim", c.backbone.ffn_dim);
        c.backbone.vocab_size = b.value("vocab_size", c.backbone.vocab_size);
        c.backbone.max_seq = b.value("max_seq", c.backbone.max_seq);
        c.backbone.seed = b.value("seed", c.backbone.seed);
    }
    if (j.contains("adapter")) {
        c.adapter.rank = j["adapter"].value("rank", c.adapter.rank);
        c.adapter.dropout = j["adapter"].value("dropout", c.adapter.dropout);
    }
    c.memory_fraction = j.value("memory_fraction", c.memory_fraction);
    if (j.contains("relax")) c.relax = relax_from_string(j["relax"]);
    c.tau = j.value("tau", c.tau);
    if (j.contains("mode")) c.mode = composition_from_string(j["mode"]);
    if (j.contains("regime")) {
        std::string r = j["regime"];
        if (r != "CIL" && r != "TIL") throw ConfigError("regime must be CIL or TIL, got " + r);
        c.regime = r == "CIL" ? Regime::CIL : Regime::TIL;
    }
    if (j.contains("generator")) {
        const auto& g = j["generator"];
        if (g.contains("family")) c.gen.family = family_from_string(g["family"]);
        c.gen.tasks = g.value("tasks", c.gen.tasks);
        c.gen.classes_per_task = g.value("classes_per_task", c.gen.classes_per_task);
        c.gen.train_examples = g.value("train_examples", c.gen.train_examples);
        c.gen.val_examples = g.value("val_examples", c.gen.val_examples);
        c.gen.test_examples = g.value("test_examples", c.gen.test_examples);
        c.gen.vocab_size = g.value("vocab_size", c.gen.vocab_size);
        c.gen.seq_len = g.value("seq_len", c.gen.seq_len);
        c.gen.noise_rate = g.value("noise_rate", c.gen.noise_rate);
        c.gen.seed = g.value("seed", c.gen.seed);
    }
    c.ingest_path = j.value("ingest_path", "");
    c.order = j.value("order", c.order);
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("train")) {
        const auto& t = j["train"];
        c.train.lr = t.value("lr", c.train.lr);
        c.train.batch = t.value("batch", c.train.batch);
        c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
        c.train.patience = t.value("patience", c.train.patience);
        c.train.warmup_frac = t.value("warmup_frac", c.train.warmup_frac);
    }
    if (j.contains("router")) {
        const auto& t = j["router"];
        c.router.lr = t.value("lr", c.router.lr);
        c.router.epochs = t.value("epochs", c.router.epochs);
        c.router.batch = t.value("batch", c.router.batch);
        c.router.warmup_frac = t.value("warmup_frac", c.router.warmup_frac);
    }
    return c;
}

uint64_t RunConfig::hash() const { return json_hash(to_json()); }

void RunConfig::reseed(uint64_t master) {
    seed = master;
    backbone.seed = derive_seed(master, "backbone_seed");
    gen.seed = derive_seed(master, "gen_seed");
}

TaskStream RunConfig::make_stream() const {
    TaskStream stream =
        ingest_path.empty() ? generate_stream(gen) : ingest_jsonl(ingest_path, ingest);
    return apply_order(stream, order);
}

namespace {

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Trains adapter `task_id` (already the bank's sole trainable adapter) jointly
// with a fresh task-local classifier head. Depends only on the task id, the
// task data, and the config seeds, so a later standalone replay reproduces it
// bit for bit.
ClassifierHead train_task(const Backbone& backbone, AdapterBank& bank, int task_id,
                          const TaskData& task, const RunConfig& cfg) {
    int classes = static_cast<int>(task.class_names.size());
    Rng head_rng(derive_seed(cfg.seed, "head_init", static_cast<uint64_t>(task_id)));
    ClassifierHead head = ClassifierHead::make(classes, cfg.backbone.dim, head_rng);
    head.set_trainable(true);

    std::vector<TensorPtr> params = bank.trainable_params();
    params.push_back(head.weight);
    params.push_back(head.bias);
    AdamW::Options opt;
    opt.lr = cfg.train.lr;
    AdamW optimizer(params, opt);

    const auto& train = task.train.examples;
    int64_t steps_per_epoch =
        (static_cast<int64_t>(train.size()) + cfg.train.batch - 1) / cfg.train.batch;
    int64_t total_steps = cfg.train.max_epochs * steps_per_epoch;
    LinearWarmupSchedule sched(
        cfg.train.lr,
        std::max<int64_t>(1, static_cast<int64_t>(cfg.train.warmup_frac * total_steps)),
        total_steps);

    Rng rng(derive_seed(cfg.seed, "task_train", static_cast<uint64_t>(task_id)));
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    auto val_accuracy = [&]() {
        ComposerSpec spec;
        spec.kind = CompositionKind::UpperBound;
        spec.bank = &bank;
        spec.oracle_task = task_id;
        int correct = 0;
        for (const auto& e : task.val.examples) {
            auto res = backbone.encode(e.tokens, &spec, &head);
            if (argmax(res.logits->data) == e.label) ++correct;
        }
        return task.val.examples.empty()
                   ? 0.0
                   : static_cast<double>(correct) / task.val.examples.size();
    };

    auto snapshot = [&]() {
        std::vector<std::vector<double>> s;
        for (const auto& p : params) s.push_back(p->data);
        return s;
    };
    auto restore = [&](const std::vector<std::vector<double>>& s) {
        for (size_t i = 0; i < params.size(); ++i) params[i]->data = s[i];
    };

    double best_acc = -1.0;
    auto best = snapshot();
    int since_best = 0;
    // the patience clock starts once warmup ends; with a warmed-up schedule the
    // first epochs barely move the weights and would exhaust patience spuriously
    int warmup_epochs = static_cast<int>(
        (sched.warmup_steps() + steps_per_epoch - 1) / steps_per_epoch);
    Tape tape;
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.train.max_epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += cfg.train.batch) {
            size_t end = std::min(order.size(), start + cfg.train.batch);
            optimizer.zero_grad();
            for (size_t i = start; i < end; ++i) {
                const Example& e = train[order[i]];
                TapeScope scope(tape);
                ComposerSpec spec;
                spec.kind = CompositionKind::UpperBound;
                spec.bank = &bank;
                spec.oracle_task = task_id;
                spec.adapter_training = true;
                spec.rng = &rng;
                auto res = backbone.encode(e.tokens, &spec, &head);
                auto loss = scale(cross_entropy(res.logits, e.label),
                                  1.0 / static_cast<double>(end - start));
                if (!std::isfinite(loss->item()))
                    throw RunError("training diverged on task " + std::to_string(task_id));
                backward(tape, loss);
                tape.clear();
            }
            optimizer.set_lr(sched.lr_at(step++));
            optimizer.step();
        }
        double acc = val_accuracy();
        if (acc > best_acc) {
            best_acc = acc;
            best = snapshot();
            since_best = 0;
        } else if (epoch >= warmup_epochs && ++since_best >= cfg.train.patience) {
            break;
        }
    }
    restore(best);
    head.set_trainable(false);
    return head;
}

}  // namespace

CentroidSet compute_centroids(const Backbone& backbone, const TaskStream& stream) {
    CentroidSet set;
    for (size_t t = 0; t < stream.tasks.size(); ++t) {
        TaskCentroid c;
        c.task_id = static_cast<int>(t) + 1;
        c.mean_cls.assign(backbone.config().dim, 0.0);
        const auto& train = stream.tasks[t].train.examples;
        for (const auto& e : train) {
            auto res = backbone.encode(e.tokens);
            for (int i = 0; i < backbone.config().dim; ++i)
                c.mean_cls[i] += res.final_cls->data[i];
        }
        for (auto& v : c.mean_cls) v /= static_cast<double>(train.size());
        set.centroids.push_back(std::move(c));
    }
    return set;
}

TrainedState run_stream(const TaskStream& stream, const RunConfig& cfg) {
    cfg.backbone.validate();
    if (stream.tasks.empty()) throw ContractError("run_stream: empty stream");

    TrainedState state{Backbone(cfg.backbone),
                       AdapterBank(cfg.adapter, derive_seed(cfg.seed, "adapters")),
                       MemoryBuffer(cfg.memory_fraction, derive_seed(cfg.seed, "memory")),
                       ClassifierHead{},
                       {},
                       {},
                       stream,
                       cfg};

    int d = cfg.backbone.dim;
    state.global_head.weight = Tensor::create({stream.num_global_classes(), d});
    state.global_head.bias = Tensor::create({stream.num_global_classes()});

    for (size_t t = 0; t < stream.tasks.size(); ++t) {
        const TaskData& task = stream.tasks[t];
        int task_id = state.bank.add_task_adapter(cfg.backbone);
        ClassifierHead head = train_task(state.backbone, state.bank, task_id, task, cfg);
        // task's rows of the shared CIL head; rows are L2-normalized with a
        // zero bias (cosine-classifier style) so logits from heads trained in
        // isolation stay scale-comparable across tasks
        for (size_t c = 0; c < task.global_class_ids.size(); ++c) {
            int g = task.global_class_ids[c];
            double norm = 0.0;
            for (int k = 0; k < d; ++k) {
                double v = head.weight->data[c * d + k];
                norm += v * v;
            }
            norm = std::sqrt(norm) + 1e-12;
            for (int k = 0; k < d; ++k)
                state.global_head.weight->data[g * d + k] = head.weight->data[c * d + k] / norm;
            state.global_head.bias->data[g] = 0.0;
        }
        state.til_heads.push_back(std::move(head));
        state.memory.populate(task, task_id);
        state.bank.freeze_all();
    }
    state.centroids = compute_centroids(state.backbone, stream);
    return state;
}

RouterStack make_and_train_cil_routers(const TrainedState& state, const RunConfig& cfg,
                                       RouterTrainLog* log) {
    RouterStack stack(cfg.backbone.layers, state.bank.size(), cfg.backbone.dim, cfg.relax,
                      cfg.tau, derive_seed(cfg.seed, "cil_router"));
    auto view = state.memory.router_training_view(Regime::CIL);
    auto l = train_routers(stack, state, view, Regime::CIL, 0, cfg.router,
                           derive_seed(cfg.seed, "cil_router_train"));
    if (log) *log = l;
    return stack;
}

std::vector<RouterStack> make_and_train_til_routers(const TrainedState& state,
                                                    const RunConfig& cfg) {
    std::vector<RouterStack> stacks;
    for (int t = 1; t <= state.bank.size(); ++t) {
        RouterStack stack(cfg.backbone.layers, state.bank.size(), cfg.backbone.dim, cfg.relax,
                          cfg.tau, derive_seed(cfg.seed, "til_router", static_cast<uint64_t>(t)));
        auto view = state.memory.router_training_view(Regime::TIL, t);
        train_routers(stack, state, view, Regime::TIL, t, cfg.router,
                      derive_seed(cfg.seed, "til_router_train", static_cast<uint64_t>(t)));
        stacks.push_back(std::move(stack));
    }
    return stacks;
}

namespace {

// merge-static weights: deterministic routing scores averaged over the memory
// and over layers
std::vector<double> static_merge_weights(const TrainedState& state, const RouterStack& stack) {
    std::vector<double> w(stack.tasks(), 0.0);
    const auto& entries = state.memory.entries();
    if (entries.empty()) throw ContractError("static merge weights: empty memory");
    ComposerSpec spec;
    spec.kind = CompositionKind::Wavg;
    spec.bank = &state.bank;
    spec.routers = &stack;
    for (const auto& e : entries) {
        auto res = state.backbone.encode(e.tokens, &spec, nullptr);
        for (const auto& layer_scores : res.routing)
            for (size_t t = 0; t < layer_scores.size(); ++t) w[t] += layer_scores[t];
    }
    double denom = static_cast<double>(entries.size()) * stack.layers();
    for (auto& v : w) v /= denom;
    return w;
}

}  // namespace

RunReport evaluate(const TrainedState& state, const RouterStack* cil_routers,
                   const std::vector<RouterStack>* til_routers, CompositionKind mode,
                   Regime regime) {
    const bool routed = mode == CompositionKind::Wavg || mode == CompositionKind::MergePerInput ||
                        mode == CompositionKind::MergeStatic;
    if (regime == Regime::CIL && routed && !cil_routers)
        throw ContractError("evaluate: CIL routed mode needs trained routers");
    if (regime == Regime::TIL && routed &&
        (!til_routers || til_routers->size() != state.stream.tasks.size()))
        throw ContractError("evaluate: TIL routed mode needs per-task routers");

    RunReport report;
    report.mode = composition_to_string(mode);
    report.regime = regime_name(regime);
    report.relax = relax_to_string(state.cfg.relax);
    report.config_hash = state.cfg.hash();
    report.seed = state.cfg.seed;

    // per-task static merge weights are derived once per router stack
    std::vector<double> cil_static;
    if (mode == CompositionKind::MergeStatic && regime == Regime::CIL)
        cil_static = static_merge_weights(state, *cil_routers);

    for (size_t t = 0; t < state.stream.tasks.size(); ++t) {
        const TaskData& task = state.stream.tasks[t];
        const RouterStack* stack =
            routed ? (regime == Regime::CIL ? cil_routers : &(*til_routers)[t]) : nullptr;
        std::vector<double> static_w;
        if (mode == CompositionKind::MergeStatic)
            static_w = regime == Regime::CIL ? cil_static : static_merge_weights(state, *stack);

        const ClassifierHead& head =
            regime == Regime::CIL ? state.global_head : state.til_heads[t];
        int correct = 0;
        for (const Example& e : task.test.examples) {
            ComposerSpec spec;
            spec.bank = &state.bank;
            spec.kind = mode;
            switch (mode) {
                case CompositionKind::Wavg:
                case CompositionKind::MergePerInput:
                    spec.routers = stack;
                    break;
                case CompositionKind::MergeStatic:
                    spec.fixed_weights = static_w;
                    break;
                case CompositionKind::UpperBound:
                    spec.oracle_task = static_cast<int>(t) + 1;
                    break;
                case CompositionKind::Centroid: {
                    auto base = state.backbone.encode(e.tokens);
                    spec.fixed_weights = centroid_weights(state.centroids, base.final_cls->data);
                    break;
                }
                default:
                    break;
            }
            auto res = state.backbone.encode(e.tokens, &spec, &head);
            int predicted = argmax(res.logits->data);
            int truth = regime == Regime::CIL ? e.global_label : e.label;
            if (predicted == truth) ++correct;
        }
        report.task_names.push_back(task.name);
        report.per_task_acc.push_back(task.test.examples.empty()
                                          ? 0.0
                                          : static_cast<double>(correct) /
                                                task.test.examples.size());
    }
    report.avg_acc = std::accumulate(report.per_task_acc.begin(), report.per_task_acc.end(), 0.0) /
                     static_cast<double>(report.per_task_acc.size());

    if (cil_routers) report.routing = routing_score_matrix(*cil_routers, state, state.stream);
    int classes = state.stream.num_global_classes();
    for (auto m : {FlopsMethod::Base, FlopsMethod::Wavg, FlopsMethod::Merge,
                   FlopsMethod::Centroid})
        report.flops.push_back(
            estimate_flops(state.cfg.backbone, state.cfg.adapter, state.bank.size(), classes, m));
    return report;
}

double standalone_task_accuracy(const TrainedState& state, int task_id) {
    // full from-scratch replay of the single task, same derived seeds
    const RunConfig& cfg = state.cfg;
    Backbone backbone(cfg.backbone);
    AdapterBank bank(cfg.adapter, derive_seed(cfg.seed, "adapters"));
    for (int t = 1; t <= task_id; ++t) bank.add_task_adapter(cfg.backbone);
    const TaskData& task = state.stream.tasks[task_id - 1];
    ClassifierHead head = train_task(backbone, bank, task_id, task, cfg);
    ComposerSpec spec;
    spec.kind = CompositionKind::UpperBound;
    spec.bank = &bank;
    spec.oracle_task = task_id;
    int correct = 0;
    for (const auto& e : task.test.examples) {
        auto res = backbone.encode(e.tokens, &spec, &head);
        if (argmax(res.logits->data) == e.label) ++correct;
    }
    return task.test.examples.empty() ? 0.0
                                      : static_cast<double>(correct) / task.test.examples.size();
}

std::vector<SweepRow> sweep_memory(const RunConfig& base, const std::vector<double>& fractions,
                                   const std::vector<uint64_t>& seeds) {
    if (fractions.empty()) throw ContractError("sweep: no fractions");
    if (!std::is_sorted(fractions.begin(), fractions.end()))
        throw ContractError("sweep: fractions must be sorted");
    for (double p : fractions)
        if (p <= 0.0 || p > 1.0)
            throw ContractError("sweep: fraction out of (0, 1]: " + std::to_string(p));

    std::vector<SweepRow> rows;
    for (uint64_t seed : seeds) {
        RunConfig cfg = base;
        cfg.reseed(seed);
        TaskStream stream = cfg.make_stream();
        TrainedState state = run_stream(stream, cfg);
        for (double p : fractions) {
            MemoryBuffer memory(p, derive_seed(seed, "sweep_memory"));
            for (size_t t = 0; t < stream.tasks.size(); ++t)
                memory.populate(stream.tasks[t], static_cast<int>(t) + 1);
            RouterStack stack(cfg.backbone.layers, state.bank.size(), cfg.backbone.dim, cfg.relax,
                              cfg.tau, derive_seed(seed, "sweep_router"));
            auto view = memory.router_training_view(Regime::CIL);
            train_routers(stack, state, view, Regime::CIL, 0, cfg.router,
                          derive_seed(seed, "sweep_router_train"));
            RunReport rep = evaluate(state, &stack, nullptr, CompositionKind::Wavg, Regime::CIL);
            rows.push_back({seed, p, rep.avg_acc});
        }
    }
    return rows;
}

AblationResult ablate_relaxation(const RunConfig& base, const std::vector<uint64_t>& seeds) {
    AblationResult out;
    out.seeds = seeds;
    for (uint64_t seed : seeds) {
        RunConfig cfg = base;
        cfg.reseed(seed);
        TaskStream stream = cfg.make_stream();
        TrainedState state = run_stream(stream, cfg);
        state.memory.router_training_view(Regime::CIL);  // fails fast when empty
        for (RelaxationMode mode : {RelaxationMode::GumbelSigmoid, RelaxationMode::Softmax}) {
            RunConfig variant = cfg;
            variant.relax = mode;
            TrainedState* s = &state;
            s->cfg.relax = mode;
            RouterStack stack = make_and_train_cil_routers(*s, variant);
            RunReport rep = evaluate(*s, &stack, nullptr, CompositionKind::Wavg, Regime::CIL);
            if (mode == RelaxationMode::GumbelSigmoid) {
                out.gumbel_acc.push_back(rep.avg_acc);
                if (out.gumbel_routing.empty()) out.gumbel_routing = rep.routing;
            } else {
                out.softmax_acc.push_back(rep.avg_acc);
                if (out.softmax_routing.empty()) out.softmax_routing = rep.routing;
            }
        }
    }
    auto mean = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    out.gumbel_mean = mean(out.gumbel_acc);
    out.softmax_mean = mean(out.softmax_acc);
    return out;
}

FlopsEstimate estimate_flops(const BackboneConfig& cfg, const AdapterConfig& adapter, int tasks,
                             int classes, FlopsMethod method, int seq_len) {
    double s = seq_len, d = cfg.dim, f = cfg.ffn_dim, L = cfg.layers, h = cfg.heads;
    double r = adapter.rank, T = tasks;

    auto linear = [s](double in, double out) { return 2.0 * s * in * out + s * out; };
    double per_layer = 2.0 * 8.0 * s * d                 // two layer norms
                       + 4.0 * linear(d, d)              // q, k, v, o projections
                       + 2.0 * s * s * d                 // attention scores
                       + 5.0 * h * s * s                 // score softmax
                       + 2.0 * s * s * d                 // weighted value sum
                       + linear(d, f) + 12.0 * s * f     // ffn up + gelu
                       + linear(f, d);
    double base = L * per_layer + 8.0 * s * d            // final norm
                  + 2.0 * d * classes + classes;         // classifier on [CLS]

    // one task's adapter path: two targets per layer, down then up projection
    double adapter_path = L * 2.0 * (2.0 * s * d * r + 2.0 * s * r * d);
    double router_linears = L * (2.0 * d * T + T);

    FlopsEstimate est;
    switch (method) {
        case FlopsMethod::Base:
            est.method = "base";
            est.flops = base;
            break;
        case FlopsMethod::Wavg:
            est.method = "wavg";
            est.flops = base + T * adapter_path + router_linears;
            break;
        case FlopsMethod::Merge:
            est.method = "merge";
            est.flops = base + adapter_path;
            break;
        case FlopsMethod::Centroid:
            est.method = "centroid";
            est.flops = base + adapter_path;
            break;
    }
    return est;
}

json RunReport::to_json() const {
    json j;
    j["mode"] = mode;
    j["regime"] = regime;
    j["relax"] = relax;
    j["task_names"] = task_names;
    j["per_task_acc"] = per_task_acc;
    j["avg_acc"] = avg_acc;
    j["routing"] = routing;
    json fl = json::array();
    for (const auto& f : flops) fl.push_back({{"method", f.method}, {"flops", f.flops}});
    j["flops"] = fl;
    j["config_hash"] = hash_hex(config_hash);
    j["seed"] = seed;
    return j;
}

}  // namespace l2r
