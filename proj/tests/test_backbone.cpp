#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "l2r/adapter.hpp"
#include "l2r/backbone.hpp"
#include "l2r/data.hpp"
#include "l2r/composer.hpp"
#include "test_util.hpp"

using namespace l2r;

namespace {

BackboneConfig small_config() {
    BackboneConfig cfg;
    cfg.layers = 2;
    cfg.dim = 32;
    cfg.heads = 4;
    cfg.ffn_dim = 64;
    cfg.vocab_size = 100;
    cfg.max_seq = 16;
    cfg.seed = 7;
    return cfg;
}

std::vector<int> sample_tokens(const BackboneConfig& cfg, uint64_t seed, int len = 0) {
    if (len == 0) len = cfg.max_seq;
    std::vector<int> t(len);
    t[0] = kClsToken;
    Rng rng(seed);
    for (int i = 1; i < len; ++i) t[i] = rng.uniform_int(kFirstContentToken, cfg.vocab_size - 1);
    return t;
}

}  // namespace

TEST_CASE("parameter count matches the closed form by enumeration") {
    BackboneConfig cfg = small_config();
    cfg.vocab_size = 100;
    Backbone bb(cfg);
    int64_t enumerated = 0;
    for (const auto& [name, t] : bb.named_parameters()) enumerated += t->size();
    CHECK(enumerated == cfg.param_count());
    CHECK(enumerated == bb.param_count());
    // spec'd example shape: L=2, d=32, heads=4, ffn=64, vocab=100, seq=16
    int64_t expect = 100 * 32 + 16 * 32 +
                     2 * (4 * (32 * 32 + 32) + 4 * 32 + (64 * 32 + 64) + (32 * 64 + 32)) +
                     2 * 32;
    CHECK(enumerated == expect);
}

TEST_CASE("same seed gives bitwise-identical parameters, different seed differs") {
    BackboneConfig cfg = small_config();
    Backbone a(cfg), b(cfg);
    auto pa = a.named_parameters(), pb = b.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].first == pb[i].first);
        CHECK(pa[i].second->data == pb[i].second->data);
    }
    cfg.seed = 8;
    Backbone c(cfg);
    CHECK(c.named_parameters()[0].second->data != pa[0].second->data);
}

TEST_CASE("invalid configs are rejected") {
    BackboneConfig cfg = small_config();
    cfg.heads = 5;  // 32 % 5 != 0
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.layers = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.dim = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("all backbone parameters are frozen") {
    Backbone bb(small_config());
    for (const auto& [name, t] : bb.named_parameters()) {
        CAPTURE(name);
        CHECK_FALSE(t->requires_grad);
    }
}

TEST_CASE("encode returns L+1 hidden states and is deterministic") {
    BackboneConfig cfg = small_config();
    Backbone bb(cfg);
    auto tokens = sample_tokens(cfg, 3);
    auto r1 = bb.encode(tokens);
    auto r2 = bb.encode(tokens);
    CHECK(static_cast<int>(r1.hidden.size()) == cfg.layers + 1);
    CHECK(static_cast<int>(r1.cls.size()) == cfg.layers + 1);
    CHECK(r1.final_cls->data == r2.final_cls->data);
    CHECK(r1.final_cls->shape == std::vector<int>{1, cfg.dim});
}

TEST_CASE("encode rejects over-long and empty input") {
    BackboneConfig cfg = small_config();
    Backbone bb(cfg);
    CHECK_THROWS_AS(bb.encode(sample_tokens(cfg, 1, cfg.max_seq + 1)), ContractError);
    std::vector<int> empty;
    CHECK_THROWS_AS(bb.encode(empty), ContractError);
}

TEST_CASE("zero-initialized adapter overlay leaves logits exactly unchanged") {
    BackboneConfig cfg = small_config();
    Backbone bb(cfg);
    AdapterBank bank(AdapterConfig{}, 11);
    bank.add_task_adapter(cfg);
    bank.freeze_all();
    Rng hr(5);
    auto head = ClassifierHead::make(3, cfg.dim, hr);

    auto tokens = sample_tokens(cfg, 9);
    auto plain = bb.encode(tokens, nullptr, &head);
    ComposerSpec spec;
    spec.kind = CompositionKind::UpperBound;
    spec.bank = &bank;
    spec.oracle_task = 1;
    auto overlaid = bb.encode(tokens, &spec, &head);
    CHECK(test::max_abs_diff(plain.logits->data, overlaid.logits->data) == 0.0);
}

TEST_CASE("classifier head grows by zero rows and keeps old rows") {
    Rng rng(13);
    auto head = ClassifierHead::make(2, 8, rng);
    auto w0 = head.weight->data;
    head.grow(5);
    CHECK(head.classes() == 5);
    for (int i = 0; i < 16; ++i) CHECK(head.weight->data[i] == w0[i]);
    for (int i = 16; i < 40; ++i) CHECK(head.weight->data[i] == 0.0);
    CHECK_THROWS_AS(head.grow(3), ContractError);
}

TEST_CASE("save/load round trip restores parameters bit-exactly") {
    BackboneConfig cfg = small_config();
    Backbone bb(cfg);
    std::string path = (std::filesystem::temp_directory_path() / "l2r_bb_test.bin").string();
    bb.save(path);
    Backbone back = Backbone::load(path);
    auto pa = bb.named_parameters(), pb = back.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->data == pb[i].second->data);
    auto tokens = sample_tokens(cfg, 21);
    CHECK(bb.encode(tokens).final_cls->data == back.encode(tokens).final_cls->data);
    std::filesystem::remove(path);
}

TEST_CASE("backbone parameters are bit-identical after encode with a training graph") {
    BackboneConfig cfg = small_config();
    Backbone bb(cfg);
    std::vector<std::vector<double>> before;
    for (const auto& [name, t] : bb.named_parameters()) before.push_back(t->data);
    Tape tape;
    {
        TapeScope scope(tape);
        Rng hr(5);
        auto head = ClassifierHead::make(2, cfg.dim, hr);
        head.set_trainable(true);
        auto res = bb.encode(sample_tokens(cfg, 2), nullptr, &head);
        backward(tape, cross_entropy(res.logits, 0));
        tape.clear();
    }
    size_t i = 0;
    for (const auto& [name, t] : bb.named_parameters()) CHECK(t->data == before[i++]);
}
