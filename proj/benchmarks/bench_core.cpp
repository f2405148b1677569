#include <benchmark/benchmark.h>

#include <vector>

#include "l2r/adapter.hpp"
#include "l2r/backbone.hpp"
#include "l2r/composer.hpp"
#include "l2r/router.hpp"

namespace {

using namespace l2r;

BackboneConfig bench_backbone_config() {
    BackboneConfig cfg;
    cfg.layers = 4;
    cfg.dim = 64;
    cfg.heads = 4;
    cfg.ffn_dim = 128;
    cfg.vocab_size = 400;
    cfg.max_seq = 32;
    cfg.seed = 7;
    return cfg;
}

std::vector<int> bench_tokens(const BackboneConfig& cfg) {
    std::vector<int> tokens(cfg.max_seq, kPadToken);
    tokens[0] = kClsToken;
    Rng rng(11);
    for (size_t i = 1; i < tokens.size(); ++i)
        tokens[i] = rng.uniform_int(kFirstContentToken, cfg.vocab_size - 1);
    return tokens;
}

struct BenchState {
    BackboneConfig cfg = bench_backbone_config();
    Backbone backbone{cfg};
    AdapterBank bank{AdapterConfig{}, 13};
    RouterStack routers{cfg.layers, 5, cfg.dim, RelaxationMode::GumbelSigmoid, 1.0, 17};
    std::vector<int> tokens = bench_tokens(cfg);

    BenchState() {
        for (int t = 0; t < 5; ++t) bank.add_task_adapter(cfg);
        bank.freeze_all();
    }
};

BenchState& state() {
    static BenchState s;
    return s;
}

void BM_EncodeBase(benchmark::State& bm) {
    auto& s = state();
    for (auto _ : bm) benchmark::DoNotOptimize(s.backbone.encode(s.tokens));
}
BENCHMARK(BM_EncodeBase);

void BM_EncodeWavg(benchmark::State& bm) {
    auto& s = state();
    ComposerSpec spec;
    spec.kind = CompositionKind::Wavg;
    spec.bank = &s.bank;
    spec.routers = &s.routers;
    for (auto _ : bm) benchmark::DoNotOptimize(s.backbone.encode(s.tokens, &spec));
}
BENCHMARK(BM_EncodeWavg);

void BM_EncodeMergeStatic(benchmark::State& bm) {
    auto& s = state();
    ComposerSpec spec;
    spec.kind = CompositionKind::MergeStatic;
    spec.bank = &s.bank;
    spec.fixed_weights = {0.2, 0.2, 0.2, 0.2, 0.2};
    for (auto _ : bm) benchmark::DoNotOptimize(s.backbone.encode(s.tokens, &spec));
}
BENCHMARK(BM_EncodeMergeStatic);

void BM_AdapterDelta(benchmark::State& bm) {
    auto& s = state();
    auto x = Tensor::create({s.cfg.max_seq, s.cfg.dim});
    Rng rng(19);
    for (auto& v : x->data) v = rng.normal();
    const LoraPair& pair = s.bank.task(1).layers[0][0];
    for (auto _ : bm) benchmark::DoNotOptimize(adapter_delta(pair, x, false));
}
BENCHMARK(BM_AdapterDelta);

void BM_Route(benchmark::State& bm) {
    auto& s = state();
    auto h = Tensor::create({1, s.cfg.dim});
    Rng rng(23);
    for (auto& v : h->data) v = rng.normal();
    for (auto _ : bm) benchmark::DoNotOptimize(s.routers.route(0, h, false));
}
BENCHMARK(BM_Route);

}  // namespace

BENCHMARK_MAIN();
