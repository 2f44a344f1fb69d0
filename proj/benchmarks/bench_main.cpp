#include "stylos/model.hpp"
#include "stylos/renderer.hpp"
#include "stylos/scene_data.hpp"
#include "stylos/voxelizer.hpp"

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include <cmath>

using namespace stylos;

namespace {

GaussianSet random_gaussians(int64_t m) {
    torch::manual_seed(0);
    GaussianSet g;
    g.means = torch::rand({m, 3}) * torch::tensor({2.0f, 2.0f, 1.0f}) + torch::tensor({-1.0f, -1.0f, 2.0f});
    g.opacities = torch::rand({m}) * 0.9 + 0.05;
    g.rotations = torch::randn({m, 4});
    g.rotations = g.rotations / g.rotations.norm(2, -1, true);
    g.scales = torch::rand({m, 3}) * 0.05 + 0.01;
    g.sh = torch::randn({m, 3, 4}) * 0.3;
    g.confidences = torch::ones({m});
    g.sh_degree = 1;
    return g;
}

void BM_Render(benchmark::State& state) {
    auto g = random_gaussians(state.range(0));
    CameraParams cam;
    torch::NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(render(g, cam, 64, 64).image);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Render)->Arg(1024)->Arg(4096)->Arg(12288)->Unit(benchmark::kMillisecond);

void BM_RenderBackward(benchmark::State& state) {
    auto g = random_gaussians(state.range(0));
    g.sh.set_requires_grad(true);
    g.means.set_requires_grad(true);
    CameraParams cam;
    for (auto _ : state) {
        auto out = render(g, cam, 64, 64);
        out.image.sum().backward();
    }
}
BENCHMARK(BM_RenderBackward)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
    torch::manual_seed(0);
    StylosModel model{ModelConfig{}};
    model->eval();
    auto images = torch::rand({1, state.range(0), 3, 64, 64});
    auto style = torch::rand({1, 3, 64, 64});
    torch::NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(model->forward(images, style).sh);
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Voxelize(benchmark::State& state) {
    const int64_t s = state.range(0);
    torch::manual_seed(0);
    PointMap pm{torch::rand({s, 64, 64, 3}), torch::rand({s, 64, 64}) + 0.1, torch::ones({s, 64, 64}, torch::kBool)};
    auto feats = torch::randn({s, 16, 64, 64});
    GridSpec spec;
    for (auto _ : state) benchmark::DoNotOptimize(voxelize(feats, pm, spec).features);
}
BENCHMARK(BM_Voxelize)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
