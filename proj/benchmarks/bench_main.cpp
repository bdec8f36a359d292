#include <benchmark/benchmark.h>

#include <random>

#include "saldis/dissimilarity.hpp"
#include "saldis/metrics.hpp"
#include "saldis/readout.hpp"
#include "saldis/svcca.hpp"
#include "saldis/tensor.hpp"

namespace {

using namespace saldis;

Grid random_grid(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Grid g(h, w);
    for (double& v : g.data) v = unif(rng);
    return g;
}

void BM_GaussianBlur(benchmark::State& state) {
    const Grid g = random_grid(static_cast<int>(state.range(0)),
                               static_cast<int>(state.range(0)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(gaussian_blur(g, 2.0));
}
BENCHMARK(BM_GaussianBlur)->Arg(64)->Arg(256);

void BM_AucJudd(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const SaliencyMap p = normalize_to_distribution(random_grid(n, n, 2));
    Grid f(n, n);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) f.data[rng() % f.data.size()] = 1.0;
    for (auto _ : state) benchmark::DoNotOptimize(auc_judd(p, f));
}
BENCHMARK(BM_AucJudd)->Arg(32)->Arg(128);

void BM_Forward(benchmark::State& state) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    FeatureMap fused(24, 32, 10);
    for (double& v : fused.data) v = unif(rng);
    ReadoutModel model = make_readout_model(10, 5);
    model.smooth_sigma = 1.0;
    for (auto _ : state) benchmark::DoNotOptimize(forward(model, fused));
}
BENCHMARK(BM_Forward);

void BM_SvccaScore(benchmark::State& state) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    FeatureMatrix x(64, 8), y(64, 8);
    for (double& v : x.data) v = unif(rng);
    for (double& v : y.data) v = unif(rng);
    for (auto _ : state) benchmark::DoNotOptimize(svcca_score(x, y));
}
BENCHMARK(BM_SvccaScore);

void BM_DissimilarityScores(benchmark::State& state) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    ObjectSet set;
    for (int i = 0; i < 6; ++i) {
        FeatureMap f(8, 8, 16);
        for (double& v : f.data) v = unif(rng);
        Detection d;
        d.x_max = d.y_max = 10;
        set.objects.emplace_back(d, std::move(f));
    }
    for (auto _ : state) benchmark::DoNotOptimize(dissimilarity_scores(set));
}
BENCHMARK(BM_DissimilarityScores);

}  // namespace

BENCHMARK_MAIN();
