#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "l2r/tensor.hpp"

namespace l2r {

struct ComposerSpec;

struct BackboneConfig {
    int layers = 4;
    int dim = 64;
    int heads = 4;
    int ffn_dim = 128;
    int vocab_size = 400;
    int max_seq = 32;
    uint64_t seed = 1;

    void validate() const;
    // closed-form parameter count for this architecture
    int64_t param_count() const;
};

// Linear map from pooled representation to class logits. The weight is
// class-major (C x d) so growing the class space appends rows.
struct ClassifierHead {
    TensorPtr weight;  // C x d
    TensorPtr bias;    // C

    static ClassifierHead make(int classes, int dim, Rng& rng);
    int classes() const { return weight ? weight->rows() : 0; }
    // appends zero-initialized rows for newly introduced classes
    void grow(int new_total);
    void set_trainable(bool trainable);
    ClassifierHead clone() const;
    TensorPtr logits(const TensorPtr& h_cls) const;  // h_cls: 1 x d
};

struct EncodeResult {
    std::vector<TensorPtr> hidden;  // L+1 states, seq x d (embedding out + L layer outs)
    std::vector<TensorPtr> cls;     // L+1 position-0 rows, 1 x d
    TensorPtr final_cls;            // post final-norm, 1 x d; classifier input
    TensorPtr logits;               // 1 x C, when a head is given
    std::vector<std::vector<double>> routing;  // per-layer weights, when composed
};

// Pre-norm transformer encoder, randomly initialized from the config seed and
// frozen (no parameter ever carries requires_grad). Attention has no padding
// mask; inputs are fixed-length with [CLS] at position 0.
class Backbone {
public:
    explicit Backbone(const BackboneConfig& cfg);

    const BackboneConfig& config() const { return cfg_; }
    std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
    int64_t param_count() const;

    EncodeResult encode(std::span<const int> tokens, const ComposerSpec* composer = nullptr,
                        const ClassifierHead* head = nullptr) const;

    void save(const std::string& path) const;
    static Backbone load(const std::string& path);

private:
    struct Layer {
        TensorPtr wq, bq, wk, bk, wv, bv, wo, bo;
        TensorPtr ln1_g, ln1_b, ln2_g, ln2_b;
        TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    };

    BackboneConfig cfg_;
    TensorPtr tok_emb_, pos_emb_;
    std::vector<Layer> layers_;
    TensorPtr lnf_g_, lnf_b_;
};

}  // namespace l2r
