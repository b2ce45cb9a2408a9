#include <benchmark/benchmark.h>

#include "xrf/layers.h"
#include "xrf/models.h"
#include "xrf/ops.h"
#include "xrf/rng.h"

using namespace xrf;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, bool requires_grad) {
    auto rng = make_rng(seed, "bench");
    Tensor t = Tensor::zeros(shape, requires_grad);
    for (auto& v : t.mutable_data()) v = uniform(rng, -1.0, 1.0);
    return t;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = state.range(0);
    const auto a = random_tensor({n, n}, 1, false), b = random_tensor({n, n}, 2, false);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_MatmulBackward(benchmark::State& state) {
    const auto n = state.range(0);
    auto a = random_tensor({n, n}, 1, true), b = random_tensor({n, n}, 2, true);
    for (auto _ : state) {
        a.zero_grad();
        b.zero_grad();
        sum(matmul(a, b)).backward();
    }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(256);

void BM_Conv2d(benchmark::State& state) {
    const auto size = state.range(0);
    const auto x = random_tensor({8, 16, size, size}, 3, false);
    const auto w = random_tensor({32, 16, 3, 3}, 4, false);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, Tensor(), {1, 1}));
}
BENCHMARK(BM_Conv2d)->Arg(32)->Arg(64);

void BM_Conv2dBackward(benchmark::State& state) {
    const auto size = state.range(0);
    auto x = random_tensor({8, 16, size, size}, 3, true);
    auto w = random_tensor({32, 16, 3, 3}, 4, true);
    for (auto _ : state) {
        x.zero_grad();
        w.zero_grad();
        sum(conv2d(x, w, Tensor(), {1, 1})).backward();
    }
}
BENCHMARK(BM_Conv2dBackward)->Arg(32)->Arg(64);

void BM_Attention(benchmark::State& state) {
    const auto tokens = state.range(0);
    auto rng = make_rng(5, "bench-mha");
    MultiHeadAttention mha(64, 4, rng);
    auto x = random_tensor({16, tokens, 64}, 6, true);
    ForwardContext ctx;
    for (auto _ : state) {
        x.zero_grad();
        sum(mha.forward(x, ctx)).backward();
    }
}
BENCHMARK(BM_Attention)->Arg(4)->Arg(49)->Arg(196);

void BM_ModelTrainStep(benchmark::State& state) {
    ModelSpec spec;
    spec.family = static_cast<Family>(state.range(0));
    spec.height = spec.width = 64;
    spec.cnn_filters1 = 8;
    spec.cnn_filters2 = 16;
    spec.cnn_dense = 64;
    spec.resnet_width = 8;
    spec.vit_dim = 64;
    spec.vit_depth = 2;
    spec.vit_heads = 4;
    spec.vit_mlp_ratio = 2;
    Model m = build_model(spec);
    const auto x = random_tensor({16, 3, 64, 64}, 7, false);
    auto rng = make_rng(8, "bench-dropout");
    for (auto _ : state) {
        m.zero_grad();
        ForwardContext ctx;
        ctx.training = true;
        ctx.rng = &rng;
        sum(m.forward(x, ctx)).backward();
    }
    state.SetLabel(std::string(family_name(spec.family)));
}
BENCHMARK(BM_ModelTrainStep)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
