#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "camfit/kernels.hpp"
#include "camfit/model.hpp"
#include "camfit/tensor.hpp"

namespace k = camfit::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1)),
               kk = static_cast<std::size_t>(state.range(2));
    const auto a = random_vec(m * kk, 1), b = random_vec(kk * n, 2);
    std::vector<double> c(m * n);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::gemm(k::Trans::No, k::Trans::No, m, n, kk, 1.0, a.data(), kk, b.data(), n, 0.0, c.data(), n);
        else
            k::reference::gemm(k::Trans::No, k::Trans::No, m, n, kk, 1.0, a.data(), kk, b.data(), n, 0.0, c.data(),
                               n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m * n * kk));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0)), cols = static_cast<std::size_t>(state.range(1));
    const auto x = random_vec(rows * cols, 3);
    std::vector<double> y(x.size());
    for (auto _ : state) {
        if constexpr (Parallel)
            k::softmax_rows(x.data(), y.data(), rows, cols);
        else
            k::reference::softmax_rows(x.data(), y.data(), rows, cols);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0)), cols = static_cast<std::size_t>(state.range(1));
    const auto x = random_vec(rows * cols, 4);
    const std::vector<double> g(cols, 1.0), b(cols, 0.0);
    std::vector<double> y(x.size()), xhat(x.size()), inv(rows);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::layer_norm_rows(x.data(), g.data(), b.data(), 1e-5, y.data(), xhat.data(), inv.data(), rows, cols);
        else
            k::reference::layer_norm_rows(x.data(), g.data(), b.data(), 1e-5, y.data(), xhat.data(), inv.data(), rows,
                                          cols);
        benchmark::DoNotOptimize(y.data());
    }
}

void BM_ModelForward(benchmark::State& state) {
    camfit::ModelConfig cfg;
    cfg.variant = static_cast<camfit::Variant>(state.range(0));
    camfit::Rng rng(0);
    const camfit::ModelParams p = camfit::build_variant(cfg, rng);
    camfit::ModelInput in;
    in.video = camfit::Tensor::randn({cfg.frames, cfg.height, cfg.width, cfg.channels}, rng);
    camfit::CameraTrajectory traj;
    for (std::size_t f = 0; f < cfg.frames; ++f) {
        camfit::CameraPose pose;
        pose.K = camfit::intrinsics_from_fov(cfg.height, cfg.width, 60.0);
        pose.t = camfit::Vec3(0.0, 0.0, 0.1 * static_cast<double>(f));
        traj.poses.push_back(pose);
    }
    in.camera = camfit::camera_features(cfg, camfit::normalize_trajectory(traj));
    for (auto _ : state) benchmark::DoNotOptimize(camfit::model_forward(p, in));
}

}  // namespace

// Shapes from the desk-scale model: token projections, attention scores, feed-forward.
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Args({128, 64, 64})->Args({128, 256, 64})->Args({256, 256, 256});
BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Args({128, 64, 64})->Args({128, 256, 64})->Args({256, 256, 256});
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel")->Args({512, 128})->Args({4096, 256});
BENCHMARK(BM_Softmax<false>)->Name("softmax/reference")->Args({512, 128})->Args({4096, 256});
BENCHMARK(BM_LayerNorm<true>)->Name("layer_norm/parallel")->Args({128, 64})->Args({4096, 64});
BENCHMARK(BM_LayerNorm<false>)->Name("layer_norm/reference")->Args({128, 64})->Args({4096, 64});
BENCHMARK(BM_ModelForward)->Name("model_forward")->Arg(static_cast<int>(camfit::Variant::Base))
    ->Arg(static_cast<int>(camfit::Variant::Full))->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
