#include "l2r/backbone.hpp"

#include <cmath>

#include "l2r/composer.hpp"
#include "l2r/router.hpp"
#include "l2r/serialize.hpp"

namespace l2r {

void BackboneConfig::validate() const {
    if (layers < 1) throw ConfigError("backbone: layers must be >= 1");
    if (dim < 1 || heads < 1 || ffn_dim < 1 || vocab_size < kFirstContentToken || max_seq < 1)
        throw ConfigError("backbone: dims must be positive");
    if (dim % heads != 0)
        throw ConfigError("backbone: dim " + std::to_string(dim) + " not divisible by heads " +
                          std::to_string(heads));
}

int64_t BackboneConfig::param_count() const {
    int64_t d = dim, f = ffn_dim;
    int64_t per_layer = 4 * (d * d + d)      // q,k,v,o projections + biases
                        + 4 * d              // two layer norms, gamma + beta
                        + (f * d + f)        // ffn up
                        + (d * f + d);       // ffn down
    return static_cast<int64_t>(vocab_size) * d + static_cast<int64_t>(max_seq) * d +
           layers * per_layer + 2 * d;  // final norm
}

ClassifierHead ClassifierHead::make(int classes, int dim, Rng& rng) {
    ClassifierHead h;
    h.weight = Tensor::create({classes, dim});
    double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    for (auto& v : h.weight->data) v = rng.uniform(-bound, bound);
    h.bias = Tensor::create({classes});
    return h;
}

void ClassifierHead::grow(int new_total) {
    int old = classes();
    if (new_total < old) throw ContractError("ClassifierHead::grow: cannot shrink");
    if (new_total == old) return;
    int d = weight->cols();
    auto w = Tensor::create({new_total, d});
    std::copy(weight->data.begin(), weight->data.end(), w->data.begin());
    auto b = Tensor::create({new_total});
    std::copy(bias->data.begin(), bias->data.end(), b->data.begin());
    w->requires_grad = weight->requires_grad;
    b->requires_grad = bias->requires_grad;
    weight = w;
    bias = b;
}

void ClassifierHead::set_trainable(bool trainable) {
    weight->requires_grad = trainable;
    bias->requires_grad = trainable;
}

ClassifierHead ClassifierHead::clone() const {
    ClassifierHead h;
    h.weight = Tensor::from(weight->shape, weight->data);
    h.bias = Tensor::from(bias->shape, bias->data);
    return h;
}

TensorPtr ClassifierHead::logits(const TensorPtr& h_cls) const {
    return add(matmul(h_cls, transpose(weight)), bias);
}

namespace {
TensorPtr init_normal(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
    auto t = Tensor::create(std::move(shape));
    for (auto& v : t->data) v = rng.normal(0.0, stddev);
    return t;
}
// Xavier-scaled normal; a frozen random-feature encoder needs unit-scale
// branch outputs or the residual stream drowns the input signal.
TensorPtr init_xavier(std::vector<int> shape, Rng& rng) {
    double fan = static_cast<double>(shape[0] + (shape.size() > 1 ? shape[1] : 1));
    return init_normal(std::move(shape), rng, std::sqrt(2.0 / fan));
}
TensorPtr init_const(std::vector<int> shape, double v) {
    auto t = Tensor::create(std::move(shape));
    for (auto& x : t->data) x = v;
    return t;
}
}  // namespace

Backbone::Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(cfg_.seed, "backbone"));
    int d = cfg_.dim, f = cfg_.ffn_dim;
    // small embedding scale: layer norm only reads the direction, and a small
    // initial residual lets content-dependent branch outputs dominate [CLS]
    tok_emb_ = init_normal({cfg_.vocab_size, d}, rng, 0.1);
    pos_emb_ = init_normal({cfg_.max_seq, d}, rng, 0.1);
    for (int l = 0; l < cfg_.layers; ++l) {
        Layer layer;
        layer.wq = init_xavier({d, d}, rng);
        layer.bq = Tensor::create({d});
        layer.wk = init_xavier({d, d}, rng);
        layer.bk = Tensor::create({d});
        layer.wv = init_xavier({d, d}, rng);
        layer.bv = Tensor::create({d});
        layer.wo = init_xavier({d, d}, rng);
        layer.bo = Tensor::create({d});
        layer.ln1_g = init_const({d}, 1.0);
        layer.ln1_b = Tensor::create({d});
        layer.ln2_g = init_const({d}, 1.0);
        layer.ln2_b = Tensor::create({d});
        layer.ffn_w1 = init_xavier({f, d}, rng);
        layer.ffn_b1 = Tensor::create({f});
        layer.ffn_w2 = init_xavier({d, f}, rng);
        layer.ffn_b2 = Tensor::create({d});
        layers_.push_back(std::move(layer));
    }
    lnf_g_ = init_const({d}, 1.0);
    lnf_b_ = Tensor::create({d});
}

std::vector<std::pair<std::string, TensorPtr>> Backbone::named_parameters() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    out.emplace_back("tok_emb", tok_emb_);
    out.emplace_back("pos_emb", pos_emb_);
    for (size_t l = 0; l < layers_.size(); ++l) {
        const Layer& y = layers_[l];
        std::string p = "layer" + std::to_string(l) + ".";
        out.emplace_back(p + "wq", y.wq);
        out.emplace_back(p + "bq", y.bq);
        out.emplace_back(p + "wk", y.wk);
        out.emplace_back(p + "bk", y.bk);
        out.emplace_back(p + "wv", y.wv);
        out.emplace_back(p + "bv", y.bv);
        out.emplace_back(p + "wo", y.wo);
        out.emplace_back(p + "bo", y.bo);
        out.emplace_back(p + "ln1_g", y.ln1_g);
        out.emplace_back(p + "ln1_b", y.ln1_b);
        out.emplace_back(p + "ln2_g", y.ln2_g);
        out.emplace_back(p + "ln2_b", y.ln2_b);
        out.emplace_back(p + "ffn_w1", y.ffn_w1);
        out.emplace_back(p + "ffn_b1", y.ffn_b1);
        out.emplace_back(p + "ffn_w2", y.ffn_w2);
        out.emplace_back(p + "ffn_b2", y.ffn_b2);
    }
    out.emplace_back("lnf_g", lnf_g_);
    out.emplace_back("lnf_b", lnf_b_);
    return out;
}

int64_t Backbone::param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : named_parameters()) n += t->size();
    return n;
}

namespace {

// resolves the per-layer 1 x T weight node for routed/fixed composition kinds
TensorPtr resolve_weights(const ComposerSpec& spec, int layer, const TensorPtr& h_cls_in) {
    const int tasks = spec.bank ? spec.bank->size() : 0;
    switch (spec.kind) {
        case CompositionKind::None:
        case CompositionKind::UpperBound:
            return nullptr;
        case CompositionKind::Wavg:
        case CompositionKind::MergePerInput: {
            if (!spec.routers) throw ContractError("encode: routed composition needs routers");
            return spec.routers->route(layer, h_cls_in, spec.stochastic, spec.rng, spec.forced_u);
        }
        case CompositionKind::LowerBound: {
            auto w = Tensor::create({1, tasks});
            std::fill(w->data.begin(), w->data.end(), 1.0);
            return w;
        }
        case CompositionKind::MergeStatic:
        case CompositionKind::Centroid: {
            if (static_cast<int>(spec.fixed_weights.size()) != tasks)
                throw ContractError("encode: fixed weights length " +
                                    std::to_string(spec.fixed_weights.size()) +
                                    " != adapter count " + std::to_string(tasks));
            return Tensor::from({1, tasks}, spec.fixed_weights);
        }
    }
    return nullptr;
}

}  // namespace

EncodeResult Backbone::encode(std::span<const int> tokens, const ComposerSpec* composer,
                              const ClassifierHead* head) const {
    if (tokens.empty() || static_cast<int>(tokens.size()) > cfg_.max_seq)
        throw ContractError("encode: sequence length " + std::to_string(tokens.size()) +
                            " outside [1, " + std::to_string(cfg_.max_seq) + "]");
    if (composer && composer->kind != CompositionKind::None) {
        if (!composer->bank) throw ContractError("encode: composer has no adapter bank");
        if (composer->bank->size() > 0 &&
            composer->bank->task(1).layers[0][0].down->cols() != cfg_.dim)
            throw ContractError("encode: adapter overlay dim mismatch");
        if (composer->bank->size() > 0 &&
            static_cast<int>(composer->bank->task(1).layers.size()) != cfg_.layers)
            throw ContractError("encode: adapter overlay layer count mismatch");
    }
    const bool composed = composer && composer->kind != CompositionKind::None;

    int s = static_cast<int>(tokens.size());
    int d = cfg_.dim, heads = cfg_.heads, dh = d / heads;
    double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    EncodeResult res;
    std::vector<int> positions(s);
    for (int i = 0; i < s; ++i) positions[i] = i;
    TensorPtr x = add(embed(tok_emb_, tokens), embed(pos_emb_, positions));
    res.hidden.push_back(x);
    res.cls.push_back(slice_rows(x, 0, 1));

    for (int l = 0; l < cfg_.layers; ++l) {
        const Layer& y = layers_[l];
        TensorPtr weights;
        if (composed) {
            weights = resolve_weights(*composer, l, res.cls.back());
            if (weights)
                res.routing.emplace_back(weights->data);
            else
                res.routing.emplace_back();
        }
        auto a_in = layer_norm(x, y.ln1_g, y.ln1_b);
        auto q = add(matmul(a_in, transpose(y.wq)), y.bq);
        auto k = add(matmul(a_in, transpose(y.wk)), y.bk);
        auto v = add(matmul(a_in, transpose(y.wv)), y.bv);
        if (composed) {
            auto dq = compose_delta(*composer, l, Target::Query, weights, a_in);
            auto dv = compose_delta(*composer, l, Target::Value, weights, a_in);
            if (dq) q = add(q, dq);
            if (dv) v = add(v, dv);
        }
        std::vector<TensorPtr> head_outs;
        for (int h = 0; h < heads; ++h) {
            auto qh = slice_cols(q, h * dh, (h + 1) * dh);
            auto kh = slice_cols(k, h * dh, (h + 1) * dh);
            auto vh = slice_cols(v, h * dh, (h + 1) * dh);
            auto scores = scale(matmul(qh, transpose(kh)), att_scale);
            head_outs.push_back(matmul(softmax(scores), vh));
        }
        auto attn = heads == 1 ? head_outs[0] : concat_cols(head_outs);
        x = add(x, add(matmul(attn, transpose(y.wo)), y.bo));
        auto f_in = layer_norm(x, y.ln2_g, y.ln2_b);
        auto up = gelu(add(matmul(f_in, transpose(y.ffn_w1)), y.ffn_b1));
        x = add(x, add(matmul(up, transpose(y.ffn_w2)), y.ffn_b2));
        res.hidden.push_back(x);
        res.cls.push_back(slice_rows(x, 0, 1));
    }
    res.final_cls = slice_rows(layer_norm(x, lnf_g_, lnf_b_), 0, 1);
    if (head) res.logits = head->logits(res.final_cls);
    return res;
}

void Backbone::save(const std::string& path) const {
    std::vector<NamedTensor> tensors;
    for (const auto& [name, t] : named_parameters()) tensors.push_back({name, t});
    json meta = {{"layers", cfg_.layers},     {"dim", cfg_.dim},
                 {"heads", cfg_.heads},       {"ffn_dim", cfg_.ffn_dim},
                 {"vocab_size", cfg_.vocab_size}, {"max_seq", cfg_.max_seq},
                 {"seed", cfg_.seed}};
    write_file_atomic(path, pack_tensors(tensors, meta));
}

Backbone Backbone::load(const std::string& path) {
    PackedTensors packed = unpack_tensors(read_file(path));
    BackboneConfig cfg;
    cfg.layers = packed.meta.at("layers");
    cfg.dim = packed.meta.at("dim");
    cfg.heads = packed.meta.at("heads");
    cfg.ffn_dim = packed.meta.at("ffn_dim");
    cfg.vocab_size = packed.meta.at("vocab_size");
    cfg.max_seq = packed.meta.at("max_seq");
    cfg.seed = packed.meta.at("seed");
    Backbone b(cfg);
    auto named = b.named_parameters();
    if (named.size() != packed.tensors.size())
        throw ParseError("backbone file: tensor count mismatch");
    for (size_t i = 0; i < named.size(); ++i) {
        if (named[i].first != packed.tensors[i].name)
            throw ParseError("backbone file: unexpected tensor " + packed.tensors[i].name);
        named[i].second->data = packed.tensors[i].tensor->data;
    }
    return b;
}

}  // namespace l2r
