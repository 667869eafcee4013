#include <benchmark/benchmark.h>

#include <random>

#include "qtar/denoiser.hpp"
#include "qtar/gradient.hpp"
#include "qtar/image.hpp"
#include "qtar/vb.hpp"

using namespace qtar;

namespace {

GrayImage bench_image(int side) {
    GrayImage img(side, side);
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> dist(0.0, 255.0);
    for (double& p : img.pixels) p = dist(rng);
    return img;
}

struct Setup {
    GrayImage image;
    GrayImage observed;
    TreeMax tree;
    ModelConfig model;
    std::vector<RegionStats> stats;
    PosteriorState posterior;

    Setup(int side, int labels)
        : image(bench_image(side)),
          observed(bench_image(side)),
          tree(build_tmax(side, side, 30, 2)),
          model(ModelConfig::defaults(5.0, labels, 10)) {
        stats = compute_all_stats(image, tree, model.tmpl);
        posterior = init_posterior(image, tree, model);
        vb_sweep(tree, stats, posterior, model);
    }
};

}  // namespace

static void BM_RegionStatsAll(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const GrayImage img = bench_image(side);
    const TreeMax tree = build_tmax(side, side, 30, 2);
    const NeighborTemplate tmpl = make_template(10);
    for (auto _ : state) {
        auto stats = compute_all_stats(img, tree, tmpl);
        benchmark::DoNotOptimize(stats);
    }
    state.SetItemsProcessed(state.iterations() * img.size());
}
BENCHMARK(BM_RegionStatsAll)->Arg(64)->Arg(128);

static void BM_VbSweep(benchmark::State& state) {
    Setup setup(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) {
        vb_sweep(setup.tree, setup.stats, setup.posterior, setup.model);
    }
}
BENCHMARK(BM_VbSweep)->Args({64, 16})->Args({64, 100})->Args({128, 100});

static void BM_FullGradient(benchmark::State& state) {
    Setup setup(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) {
        auto grad = full_gradient(setup.image, setup.observed, setup.tree, setup.posterior,
                                  setup.model.tmpl, setup.model);
        benchmark::DoNotOptimize(grad);
    }
    state.SetItemsProcessed(state.iterations() * setup.image.size());
}
BENCHMARK(BM_FullGradient)->Args({64, 16})->Args({64, 100})->Args({128, 100});

static void BM_GaussianFilter(benchmark::State& state) {
    const GrayImage img = bench_image(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto out = gaussian_filter(img, 0.17);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_GaussianFilter)->Arg(256);

BENCHMARK_MAIN();
