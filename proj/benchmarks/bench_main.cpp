#include <benchmark/benchmark.h>

#include "diffmac/codec.hpp"
#include "diffmac/degradation.hpp"
#include "diffmac/denoiser.hpp"
#include "diffmac/faces.hpp"
#include "diffmac/metrics.hpp"
#include "diffmac/mib.hpp"

using namespace diffmac;

namespace {

void BM_Degrade(benchmark::State& state) {
    torch::set_num_threads(1);
    const auto face = synth_face(1, static_cast<int>(state.range(0)));
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(degrade(face, sample_params(seed++)));
}
BENCHMARK(BM_Degrade)->Arg(64)->Arg(128);

void BM_Ssim(benchmark::State& state) {
    const auto a = synth_face(1, 64);
    const auto b = degrade(a, sample_params(3));
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim);

void BM_CodecEncode(benchmark::State& state) {
    torch::set_num_threads(1);
    const ManifoldCodec codec(64, 1);
    const auto face = synth_face(2, 64);
    for (auto _ : state) benchmark::DoNotOptimize(codec.encode(face));
}
BENCHMARK(BM_CodecEncode);

void BM_DenoiserForward(benchmark::State& state) {
    torch::set_num_threads(1);
    torch::NoGradGuard no_grad;
    ControlledDenoiser net(DenoiserConfig{}, 1);
    const auto batch = state.range(0);
    const auto z = torch::randn({batch, 4, 8, 8});
    const auto t = torch::full({batch}, 500, torch::kInt64);
    const auto manifold = torch::randn({batch, 8, 8, 8});
    for (auto _ : state) benchmark::DoNotOptimize(net->forward(z, t, manifold));
}
BENCHMARK(BM_DenoiserForward)->Arg(1)->Arg(16);

void BM_InfoLoss(benchmark::State& state) {
    const auto lambda = torch::rand({16, 8, 8, 8}) * 0.9;
    const auto f = torch::randn({16, 8, 8, 8});
    for (auto _ : state) benchmark::DoNotOptimize(info_loss(lambda, f));
}
BENCHMARK(BM_InfoLoss);

}  // namespace

BENCHMARK_MAIN();
