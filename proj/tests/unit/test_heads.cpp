#include "fixtures.hpp"
#include "stylos/errors.hpp"
#include "stylos/gaussians.hpp"
#include "stylos/heads.hpp"
#include "stylos/model.hpp"
#include "stylos/sh.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace stylos;
using stylos::testing::make_gaussians;
using stylos::testing::tiny_model;

namespace {

std::vector<torch::Tensor> token_layers(int64_t n, int64_t k, int64_t c, int64_t count = 1) {
    std::vector<torch::Tensor> out;
    for (int64_t i = 0; i < count; ++i) out.push_back(torch::randn({1, n, k, c}));
    return out;
}

CameraTensors identity_cams(int64_t v, double fov = M_PI / 2) {
    std::vector<CameraParams> cams(v);
    for (auto& c : cams) c.fov = {fov, fov};
    return CameraTensors::from_params(cams);
}

} // namespace

TEST(GeometryHead, ShapeAndChannelLayout) {
    HeadConfig hc{8, 4, 1};
    GeometryHead head(16, 2, hc);
    auto out = head->forward(token_layers(2, 4, 16, 2), 2, 2, torch::rand({1, 2, 3, 16, 16}));
    EXPECT_EQ(out.sizes(), (std::vector<int64_t>{1, 2, 16, 16, 11}));
    EXPECT_EQ(geometry_channels::count, 3 + 4 + 1 + 3);

    auto wide = head->forward(token_layers(1, 12, 16, 2), 3, 4, torch::rand({1, 1, 3, 24, 32}));
    EXPECT_EQ(wide.size(2), 24);
    EXPECT_EQ(wide.size(3), 32);
}

TEST(GeometryHead, ZeroTokensStayFinite) {
    GeometryHead head(16, 1, HeadConfig{8, 4, 1});
    auto layers = std::vector<torch::Tensor>{torch::zeros({1, 1, 4, 16})};
    auto out = head->forward(layers, 2, 2, torch::zeros({1, 1, 3, 16, 16}));
    EXPECT_TRUE(torch::isfinite(out).all().item<bool>());
}

TEST(DepthHead, PositiveDepthAndConfidence) {
    DepthHead head(16, 1, HeadConfig{8, 4, 1});
    auto pred = head->forward(token_layers(2, 4, 16), 2, 2, torch::rand({1, 2, 3, 16, 16}));
    EXPECT_EQ(pred.depth.sizes(), (std::vector<int64_t>{1, 2, 16, 16}));
    EXPECT_GT(pred.depth.min().item<double>(), 0.0);
    EXPECT_TRUE(torch::isfinite(pred.confidence).all().item<bool>());
    EXPECT_GE(pred.confidence.min().item<double>(), 0.0);
}

TEST(StyleHead, CoefficientCountFollowsDegree) {
    for (int64_t k : {0, 1}) {
        StyleHead head(16, 1, HeadConfig{8, 4, k});
        auto out = head->forward(token_layers(1, 4, 16), 2, 2, torch::rand({1, 1, 3, 16, 16}));
        EXPECT_EQ(out.size(4) * out.size(5), k == 0 ? 3 : 12);
    }
}

TEST(StyleHead, WidthMismatchIsConfigError) {
    StyleHead head(32, 1, HeadConfig{8, 4, 1});
    EXPECT_THROW(head->forward(token_layers(1, 4, 16), 2, 2, torch::rand({1, 1, 3, 16, 16})), ConfigError);
}

TEST(StyleHead, DcStartsAtContentColor) {
    StyleHead head(16, 1, HeadConfig{8, 4, 0});
    torch::NoGradGuard ng;
    auto img = torch::rand({1, 1, 3, 16, 16});
    auto out = head->forward({torch::zeros({1, 1, 4, 16})}, 2, 2, img);
    // zero tokens: the DC band reproduces the pixel up to the head's bias path
    auto color = out.select(-1, 0) * kShC0 + 0.5;
    auto target = img.permute({0, 1, 3, 4, 2});
    EXPECT_LT((color - target).abs().mean().item<double>(), 0.1);
}

TEST(CameraHead, NineNumbersUnitQuaternion) {
    CameraHead head(16, M_PI / 3);
    auto out = head->forward(torch::randn({2, 5, 4, 16}) * 10);
    EXPECT_EQ(out.sizes(), (std::vector<int64_t>{2, 5, 9}));
    auto q = out.slice(-1, 3, 7);
    EXPECT_LE((q.norm(2, -1) - 1).abs().max().item<double>(), 1e-6);
    auto fov = out.slice(-1, 7, 9);
    EXPECT_GT(fov.min().item<double>(), 0.0);
    EXPECT_LT(fov.max().item<double>(), M_PI);
}

TEST(CameraHead, IdenticalViewsGiveIdenticalCameras) {
    CameraHead head(16, M_PI / 3);
    auto view = torch::randn({1, 1, 4, 16});
    auto out = head->forward(view.expand({1, 3, 4, 16}).contiguous());
    EXPECT_TRUE(torch::equal(out[0][0], out[0][1]));
    EXPECT_TRUE(torch::equal(out[0][1], out[0][2]));
}

TEST(Adapter, CountsPixelsWithoutMerging) {
    int64_t v = 2, h = 4, w = 5;
    auto geom = torch::zeros({v, h, w, 11});
    auto sh = torch::zeros({v, h, w, 3, 4});
    auto depth = torch::ones({v, h, w});
    auto g = gaussian_adapter(geom, sh, depth, torch::ones({v, h, w}), identity_cams(v), AdapterOptions{0.0});
    EXPECT_EQ(g.size(), v * h * w);
    EXPECT_TRUE(torch::allclose(g.opacities, torch::full_like(g.opacities, 0.5)));
    g.validate();

    depth[0][1][2] = std::nan("");
    depth[1][0][0] = -1.0;
    auto dropped = gaussian_adapter(geom, sh, depth, torch::ones({v, h, w}), identity_cams(v), AdapterOptions{0.0});
    EXPECT_EQ(dropped.size(), v * h * w - 2);
}

TEST(Adapter, PrincipalPointUnprojectsOnAxis) {
    // odd size so a pixel center sits exactly on the principal point
    int64_t h = 3, w = 3;
    auto g = gaussian_adapter(torch::zeros({1, h, w, 11}), torch::zeros({1, h, w, 3, 1}), torch::ones({1, h, w}),
                              torch::ones({1, h, w}), identity_cams(1), AdapterOptions{0.0});
    auto center = g.means[4];
    EXPECT_NEAR(center[0].item<double>(), 0.0, 1e-6);
    EXPECT_NEAR(center[1].item<double>(), 0.0, 1e-6);
    EXPECT_NEAR(center[2].item<double>(), 1.0, 1e-6);
}

TEST(VoxelMerge, EqualConfidencesAverage) {
    auto p = torch::tensor({{0.11, 0.12, 0.13}, {0.15, 0.16, 0.17}}, torch::kFloat64);
    auto merged = voxel_merge(make_gaussians(p, torch::tensor({1.0, 1.0})), 1.0);
    ASSERT_EQ(merged.size(), 1);
    EXPECT_TRUE(torch::allclose(merged.means[0], (p[0] + p[1]) / 2));
    EXPECT_DOUBLE_EQ(merged.confidences[0].item<double>(), 2.0);
}

TEST(VoxelMerge, WeightedMeanOracle) {
    auto p = torch::tensor({{0.11, 0.12, 0.13}, {0.15, 0.16, 0.17}}, torch::kFloat64);
    auto g = make_gaussians(p, torch::tensor({3.0, 1.0}));
    g.opacities = torch::tensor({0.2, 0.6}, torch::kFloat64);
    auto merged = voxel_merge(g, 1.0);
    ASSERT_EQ(merged.size(), 1);
    for (int i = 0; i < 3; ++i) {
        double oracle = 0.75 * p[0][i].item<double>() + 0.25 * p[1][i].item<double>();
        EXPECT_NEAR(merged.means[0][i].item<double>(), oracle, 1e-12);
    }
    EXPECT_NEAR(merged.opacities[0].item<double>(), 0.75 * 0.2 + 0.25 * 0.6, 1e-12);
}

TEST(VoxelMerge, QuaternionChordalMeanIsUnitAndSignAware) {
    auto p = torch::tensor({{0.1, 0.1, 0.1}, {0.2, 0.2, 0.2}}, torch::kFloat64);
    auto g = make_gaussians(p, torch::tensor({1.0, 1.0}));
    double a = std::sqrt(0.5);
    // the same rotation with opposite sign must not cancel
    g.rotations = torch::tensor({{a, a, 0.0, 0.0}, {-a, -a, 0.0, 0.0}}, torch::kFloat64);
    auto merged = voxel_merge(g, 1.0);
    EXPECT_NEAR(merged.rotations[0].norm().item<double>(), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(merged.rotations[0][0].item<double>()), a, 1e-12);
}

TEST(VoxelMerge, DistinctVoxelsAreNoOp) {
    auto p = torch::tensor({{0.5, 0.5, 0.5}, {1.5, 0.5, 0.5}, {0.5, 2.5, -0.5}}, torch::kFloat64);
    auto g = make_gaussians(p, torch::tensor({1.0, 2.0, 3.0}));
    auto merged = voxel_merge(g, 1.0);
    ASSERT_EQ(merged.size(), 3);
    auto order = std::get<1>(merged.confidences.sort());
    auto sorted_in = std::get<1>(g.confidences.sort());
    EXPECT_TRUE(torch::allclose(merged.means.index_select(0, order), g.means.index_select(0, sorted_in)));
    EXPECT_TRUE(torch::equal(voxel_merge(g, 0.0).means, g.means));
}

TEST(VoxelMerge, ConservesMassAndIgnoresOrder) {
    torch::manual_seed(3);
    auto p = torch::rand({200, 3}, torch::kFloat64);
    auto conf = torch::rand({200}, torch::kFloat64) + 0.1;
    auto g = make_gaussians(p, conf);
    g.sh = torch::randn({200, 3, 4}, torch::kFloat64);
    auto merged = voxel_merge(g, 0.25);
    EXPECT_LT(merged.size(), 200);
    EXPECT_NEAR(merged.confidences.sum().item<double>(), conf.sum().item<double>(), 1e-9);

    auto perm = torch::randperm(200, torch::kLong);
    auto merged_p = voxel_merge(g.index_select(perm), 0.25);
    ASSERT_EQ(merged_p.size(), merged.size());
    // output is sorted by voxel key, so rows line up
    EXPECT_TRUE(torch::allclose(merged.means, merged_p.means, 1e-12, 1e-12));
    EXPECT_TRUE(torch::allclose(merged.sh, merged_p.sh, 1e-12, 1e-12));
}

TEST(GaussianExport, RoundTrip) {
    auto p = torch::rand({7, 3}, torch::kFloat64);
    auto g = make_gaussians(p, torch::rand({7}, torch::kFloat64));
    g.sh = torch::randn({7, 3, 4}, torch::kFloat64);
    auto path = std::filesystem::temp_directory_path() / "stylos_heads_export.sgsp";
    export_gaussians(g, path, 0.01);
    EXPECT_TRUE(std::filesystem::exists(path.string() + ".json"));
    auto back = import_gaussians(path);
    EXPECT_EQ(back.sh_degree, 1);
    EXPECT_TRUE(torch::allclose(back.means.to(torch::kFloat64), g.means, 1e-6, 1e-6));
    EXPECT_TRUE(torch::allclose(back.sh.to(torch::kFloat64), g.sh, 1e-6, 1e-6));
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".json");
}

TEST(Pathways, StyleLossNeverReachesGeometryHead) {
    torch::manual_seed(0);
    StylosModel model(tiny_model());
    auto images = torch::rand({1, 2, 3, 16, 16});
    auto style = torch::rand({1, 3, 16, 16});
    auto out = model->forward(images, style);
    out.sh.square().sum().backward();
    for (const auto& p : model->named_parameters()) {
        if (p.key().rfind("geometry_head.", 0) != 0 && p.key().rfind("depth_head.", 0) != 0 &&
            p.key().rfind("camera_head.", 0) != 0)
            continue;
        auto g = p.value().grad();
        EXPECT_TRUE(!g.defined() || g.abs().sum().item<double>() == 0.0) << p.key();
    }
}

TEST(Pathways, GeometryGradientsIgnoreStyleTokens) {
    torch::manual_seed(0);
    StylosModel model(tiny_model());
    auto images = torch::rand({1, 2, 3, 16, 16});
    auto run = [&](const torch::Tensor& style) {
        model->zero_grad();
        auto out = model->forward(images, style);
        auto gs = model->gaussians(out, 0);
        auto r = render(gs, out.camera_tensors(0).index(0), 16, 16, model->config().render);
        (r.image.square().sum() + out.depth.depth.sum()).backward();
        std::vector<torch::Tensor> grads;
        for (const auto& p : model->geometry_parameters()) grads.push_back(p.grad().defined() ? p.grad().clone() : torch::Tensor());
        return grads;
    };
    auto style = torch::rand({1, 3, 16, 16}, torch::requires_grad());
    auto a = run(style);
    auto b = run(style.detach());
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].defined(), b[i].defined());
        if (a[i].defined()) EXPECT_TRUE(torch::equal(a[i], b[i])) << i;
    }
}
