// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
//
//   stylos_acceptance [--work DIR] [--only 1,2,...]

#include "gradcheck.hpp"
#include "stylos/checkpoint.hpp"
#include "stylos/errors.hpp"
#include "stylos/evaluation.hpp"
#include "stylos/image_io.hpp"
#include "stylos/log.hpp"
#include "stylos/losses.hpp"
#include "stylos/pipeline.hpp"
#include "stylos/style_aggregator.hpp"
#include "stylos/trainer.hpp"
#include "stylos/voxelizer.hpp"

#include <CLI11.hpp>
#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace stylos;
namespace fs = std::filesystem;
using stylos::testing::gradcheck;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

constexpr std::array<double, 5> kAll{1, 1, 1, 1, 1};
constexpr std::array<double, 5> kFirst{1, 0, 0, 0, 0};

FeaturePyramid random_pyramid(int64_t s, int64_t h, int64_t c = 2) {
    FeaturePyramid p;
    for (int k = 0; k < 5; ++k) {
        const int64_t r = std::max<int64_t>(h >> k, 1);
        p.stages.push_back(torch::randn({s, c, r, r}, torch::kFloat64));
    }
    return p;
}

FeaturePyramid constant_pyramid(int64_t s, int64_t h, double v) {
    auto p = random_pyramid(s, h);
    for (auto& t : p.stages) t.fill_(v);
    return p;
}

FeaturePyramid from_stages(std::vector<torch::Tensor> stages) {
    FeaturePyramid p;
    p.stages = std::move(stages);
    return p;
}

// Pixels on a lattice far apart relative to the voxel size.
PointMap lattice(int64_t s, int64_t h) {
    auto ii = torch::arange(h, torch::kFloat64).view({1, h, 1}).expand({s, h, h});
    auto jj = torch::arange(h, torch::kFloat64).view({1, 1, h}).expand({s, h, h});
    auto vv = torch::arange(s, torch::kFloat64).view({s, 1, 1}).expand({s, h, h});
    PointMap pm;
    pm.points = torch::stack({ii, jj, vv * 0.5 + 0.25 * ii}, -1).contiguous();
    pm.confidence = torch::rand({s, h, h}, torch::kFloat64) + 0.5;
    pm.valid = torch::ones({s, h, h}, torch::kBool);
    return pm;
}

// ---------------------------------------------------------------- 1
Outcome loss_identities() {
    Timer timer;
    torch::manual_seed(101);
    double worst_scene = 0.0, worst_3d = 0.0, worst_zero = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        auto r = random_pyramid(1, 16), s = random_pyramid(1, 16);
        worst_scene = std::max(worst_scene, std::abs(style_loss_scene(r, s, kAll).item<double>() -
                                                     style_loss_image(r, s, kAll).item<double>()));
        auto r8 = random_pyramid(1, 8), s8 = random_pyramid(1, 8);
        Style3dOptions opt;
        opt.grid.resolution = 64;
        worst_3d = std::max(worst_3d, std::abs(style_loss_3d(r8, lattice(1, 8), s8, kFirst, opt).item<double>() -
                                               style_loss_image(r8, s8, kFirst).item<double>()));
    }

    auto p = random_pyramid(3, 16), style = random_pyramid(1, 16);
    auto img = torch::rand({3, 3, 16, 16}, torch::kFloat64);
    auto depth = torch::rand({3, 8, 8}, torch::kFloat64) + 0.5;
    CameraTensors cams{torch::tensor({{1.0, 0.0, 0.0, 0.0}}, torch::kFloat64).repeat({3, 1}),
                       torch::randn({3, 3}, torch::kFloat64), torch::ones({3, 2}, torch::kFloat64)};
    PyramidStatsEncoder encoder{FeatureExtractor()};
    std::map<std::string, double> zeros{
        {"style_image", style_loss_image(style, style, kAll).item<double>()},
        {"style_scene", style_loss_scene(style, style, kAll).item<double>()},
        {"style_3d_scene", style_loss_3d(constant_pyramid(2, 8, 0.4), lattice(2, 8), constant_pyramid(1, 8, 0.4), kAll)
                               .item<double>()},
        {"style_3d_per_view", style_loss_3d(constant_pyramid(2, 8, 0.4), lattice(2, 8), constant_pyramid(1, 8, 0.4),
                                            kAll, Style3dOptions{GridSpec{}, FusionMode::per_view, {}})
                                  .item<double>()},
        {"content", content_loss(p, p).item<double>()},
        {"tv", tv_loss(torch::full({3, 3, 8, 8}, 0.3, torch::kFloat64)).item<double>()},
        {"semantic", semantic_loss(img[0].unsqueeze(0), img[0].unsqueeze(0), encoder).item<double>()},
        {"reconstruction", reconstruction_loss(img, img).item<double>()},
        {"distillation",
         distillation_loss(depth, cams, depth, cams, torch::ones({3, 8, 8}, torch::kBool)).total().item<double>()},
    };
    std::string worst_name;
    for (const auto& [name, v] : zeros) {
        if (std::abs(v) >= worst_zero) {
            worst_zero = std::abs(v);
            worst_name = name;
        }
    }
    const double secs = timer.seconds();
    const bool pass = worst_scene <= 1e-6 && worst_3d <= 1e-5 && worst_zero <= 1e-6 && secs < 30.0;
    return {pass, "scene-vs-image " + fmt(worst_scene) + " (<=1e-6), 3d-singleton-vs-image " + fmt(worst_3d) +
                      " (<=1e-5), max identity value " + fmt(worst_zero) + " [" + worst_name + "], " + fmt(secs, 3) +
                      " s (<30)"};
}

// ---------------------------------------------------------------- 2
Outcome gradient_suite() {
    Timer timer;
    torch::manual_seed(202);
    std::map<std::string, double> loss_err, render_err;
    auto style = random_pyramid(1, 8), content = random_pyramid(2, 8);
    auto pm = lattice(2, 8);
    auto r = random_pyramid(2, 8).stages;
    auto pyr_check = [&](const std::string& name, const std::function<torch::Tensor(const FeaturePyramid&)>& fn) {
        loss_err[name] = gradcheck([&](const std::vector<torch::Tensor>& in) { return fn(from_stages(in)); }, r);
    };
    pyr_check("style_image", [&](const FeaturePyramid& p) { return style_loss_image(p, style, kAll); });
    pyr_check("style_scene", [&](const FeaturePyramid& p) { return style_loss_scene(p, style, kAll); });
    pyr_check("style_3d", [&](const FeaturePyramid& p) { return style_loss_3d(p, pm, style, kAll); });
    pyr_check("style_3d_per_view", [&](const FeaturePyramid& p) {
        return style_loss_3d(p, pm, style, kAll, Style3dOptions{GridSpec{}, FusionMode::per_view, {}});
    });
    pyr_check("content", [&](const FeaturePyramid& p) { return content_loss(p, content); });

    auto img = torch::rand({2, 3, 6, 6}, torch::kFloat64);
    auto target = torch::rand({2, 3, 6, 6}, torch::kFloat64);
    loss_err["tv"] = gradcheck([](const std::vector<torch::Tensor>& in) { return tv_loss(in[0]); }, {img});
    loss_err["reconstruction"] =
        gradcheck([&](const std::vector<torch::Tensor>& in) { return reconstruction_loss(in[0], target); }, {img});

    FeatureExtractor fx;
    fx->to(torch::kFloat64);
    PyramidStatsEncoder encoder(fx);
    auto sem_style = torch::rand({1, 3, 16, 16}, torch::kFloat64);
    loss_err["semantic"] = gradcheck(
        [&](const std::vector<torch::Tensor>& in) { return semantic_loss(in[0], sem_style, encoder); },
        {torch::rand({1, 3, 16, 16}, torch::kFloat64)});

    auto tq = torch::tensor({{1.0, 0.0, 0.0, 0.0}, {0.8, 0.0, 0.6, 0.0}}, torch::kFloat64);
    auto tt = torch::randn({2, 3}, torch::kFloat64);
    auto tf = torch::ones({2, 2}, torch::kFloat64);
    auto td = torch::rand({2, 5, 5}, torch::kFloat64) + 0.5;
    auto mask = torch::ones({2, 5, 5}, torch::kBool);
    loss_err["distillation"] = gradcheck(
        [&](const std::vector<torch::Tensor>& in) {
            CameraTensors pred{in[1] / in[1].norm(2, -1, true), in[2], in[3]};
            return distillation_loss(in[0], pred, td, CameraTensors{tq, tt, tf}, mask).total();
        },
        {td * 1.3 + torch::rand({2, 5, 5}, torch::kFloat64) * 0.4, tq + torch::randn({2, 4}, torch::kFloat64) * 0.1,
         tt + 0.3, tf - 0.2});

    auto vpm = lattice(2, 4);
    vpm.points = torch::rand({2, 4, 4, 3}, torch::kFloat64) * 3;
    auto spec = fit_grid(vpm, GridSpec{6});
    auto w = torch::randn({3}, torch::kFloat64);
    loss_err["voxel_stats"] = gradcheck(
        [&](const std::vector<torch::Tensor>& in) {
            auto [m, s] = voxel_stats(voxelize(in[0], vpm, spec));
            return (m * w).sum() + (s * w).sum();
        },
        {torch::randn({2, 3, 4, 4}, torch::kFloat64)});

    for (auto mode : {CouplingMode::frame_only, CouplingMode::global_only, CouplingMode::hybrid}) {
        StyleAggregator agg(mode, 1, 8, 2, 2);
        agg->to(torch::kFloat64);
        TokenGrid grid{torch::randn({1, 2, 4, 8}, torch::kFloat64), 2, 2, 4};
        auto weights = torch::randn({1, 2, 4, agg->out_width()}, torch::kFloat64);
        loss_err["coupling_" + to_string(mode)] = gradcheck(
            [&](const std::vector<torch::Tensor>& in) {
                TokenGrid g = grid;
                g.tokens = in[0];
                return (agg->forward(g, in[1]).final() * weights).sum();
            },
            {grid.tokens, torch::randn({1, 3, 8}, torch::kFloat64)});
    }

    GaussianSet g;
    g.means = torch::tensor({{0.1, -0.1, 2.0}, {-0.2, 0.15, 2.5}}, torch::kFloat64);
    g.confidences = torch::ones({2}, torch::kFloat64);
    g.sh_degree = 1;
    CameraParams cam;
    cam.fov = {M_PI / 2, M_PI / 2};
    auto pix_w = torch::rand({8, 8, 3}, torch::kFloat64);
    render_err["renderer"] = gradcheck(
        [&](const std::vector<torch::Tensor>& in) {
            GaussianSet h = g;
            h.means = in[0];
            h.scales = in[1];
            h.rotations = in[2] / in[2].norm(2, -1, true);
            h.opacities = in[3];
            h.sh = in[4];
            auto out = render(h, cam, 8, 8);
            return (out.image * pix_w).sum() + out.alpha.sum();
        },
        {g.means, torch::tensor({{0.3, 0.2, 0.25}, {0.2, 0.35, 0.3}}, torch::kFloat64),
         torch::tensor({{0.9, 0.1, -0.2, 0.3}, {0.8, -0.3, 0.2, 0.1}}, torch::kFloat64),
         torch::tensor({0.6, 0.7}, torch::kFloat64), torch::randn({2, 3, 4}, torch::kFloat64) * 0.3});

    double worst_loss = 0.0;
    std::string worst_name;
    for (const auto& [name, e] : loss_err) {
        if (e >= worst_loss) {
            worst_loss = e;
            worst_name = name;
        }
    }
    const double secs = timer.seconds();
    const bool pass = worst_loss < 1e-4 && render_err["renderer"] < 1e-3 && secs < 300.0;
    return {pass, std::to_string(loss_err.size()) + " loss/voxel/coupling checks, worst " + fmt(worst_loss) + " [" +
                      worst_name + "] (<1e-4); renderer " + fmt(render_err["renderer"]) + " (<1e-3); " +
                      fmt(secs, 3) + " s (<300)"};
}

// ---------------------------------------------------------------- 3
Outcome voxel_oracle() {
    const int threads = at::get_num_threads();
    at::set_num_threads(1); // sequential accumulation
    torch::manual_seed(303);
    int exact = 0;
    double worst_mass = 0.0, worst_perm = 0.0;
    GridSpec spec;
    spec.auto_fit = false;
    spec.voxel_size = 1.0;
    spec.dims = {4, 4, 4};
    for (int inst = 0; inst < 50; ++inst) {
        const int64_t s = 1 + inst % 3;
        const int64_t side = 2 + (inst * 7) % 4; // s * side^2 <= 75
        const int64_t c = 3;
        PointMap pm;
        pm.points = torch::rand({s, side, side, 3}, torch::kFloat64) * 4.0;
        pm.confidence = torch::rand({s, side, side}, torch::kFloat64) + 0.1;
        pm.valid = torch::rand({s, side, side}) > 0.15;
        pm.valid[0][0][0] = true;
        auto feats = torch::randn({s, c, side, side}, torch::kFloat64);
        auto grid = voxelize(feats, pm, spec);

        std::vector<double> acc(64 * c, 0.0), mass(64, 0.0);
        auto P = pm.points.accessor<double, 4>();
        auto W = pm.confidence.accessor<double, 3>();
        auto V = pm.valid.accessor<bool, 3>();
        auto F = feats.accessor<double, 4>();
        double conf_total = 0.0;
        for (int64_t v = 0; v < s; ++v) {
            for (int64_t y = 0; y < side; ++y) {
                for (int64_t x = 0; x < side; ++x) {
                    if (!V[v][y][x]) continue;
                    int64_t cell[3];
                    for (int a = 0; a < 3; ++a)
                        cell[a] = std::min<int64_t>(3, static_cast<int64_t>(std::floor(P[v][y][x][a])));
                    const int64_t lin = (cell[0] * 4 + cell[1]) * 4 + cell[2];
                    for (int64_t k = 0; k < c; ++k) acc[lin * c + k] += F[v][k][y][x] * W[v][y][x];
                    mass[lin] += W[v][y][x];
                    conf_total += W[v][y][x];
                }
            }
        }
        auto gf = grid.features.reshape({64, c}).contiguous();
        auto gm = grid.mass.reshape({64}).contiguous();
        bool same = true;
        for (int64_t i = 0; i < 64; ++i) {
            if (gm[i].item<double>() != mass[i]) same = false;
            for (int64_t k = 0; k < c; ++k) {
                const double oracle = mass[i] > 0 ? acc[i * c + k] / mass[i] : 0.0;
                if (gf[i][k].item<double>() != oracle) same = false;
            }
        }
        exact += same ? 1 : 0;
        worst_mass = std::max(worst_mass, std::abs(gm.sum().item<double>() - conf_total));

        auto perm = torch::randperm(s, torch::kLong);
        auto permuted = voxelize(feats.index_select(0, perm), pm.index_views(perm), spec);
        worst_perm = std::max(worst_perm, (permuted.features - grid.features).abs().max().item<double>());
    }
    at::set_num_threads(threads);
    const bool pass = exact == 50 && worst_mass <= 1e-12 && worst_perm <= 1e-6;
    return {pass, std::to_string(exact) + "/50 bit-exact vs brute-force scatter; total-mass deviation " +
                      fmt(worst_mass) + "; view-permutation deviation " + fmt(worst_perm) + " (<=1e-6)"};
}

// ---------------------------------------------------------------- 4
Outcome coupling_shapes() {
    torch::manual_seed(404);
    const int64_t width = 16;
    StyleAggregator hybrid(CouplingMode::hybrid, 2, width, 2, 2);
    {
        torch::NoGradGuard ng;
        auto src = hybrid->frame_stack->named_parameters();
        auto dst = hybrid->global_stack->named_parameters();
        for (const auto& p : src) dst[p.key()].copy_(p.value());
    }
    torch::NoGradGuard ng;
    auto style = torch::randn({1, 5, width});
    TokenGrid many{torch::randn({1, 4, 6, width}), 2, 3, 8};
    const int64_t out_width = hybrid->forward(many, style).final().size(-1);

    TokenGrid single{torch::randn({1, 1, 6, width}), 2, 3, 8};
    const double tied = (hybrid->aggregate_frame_only(single, style).final() -
                         hybrid->aggregate_global(single, style).final())
                            .abs()
                            .max()
                            .item<double>();

    StyleAggregator global(CouplingMode::global_only, 2, width, 2, 2);
    double worst_equiv = 0.0;
    auto base = global->forward(many, style).final();
    for (int t = 0; t < 5; ++t) {
        auto perm = torch::randperm(4, torch::kLong);
        TokenGrid p = many;
        p.tokens = many.tokens.index_select(1, perm);
        worst_equiv = std::max(
            worst_equiv, (global->forward(p, style).final() - base.index_select(1, perm)).abs().max().item<double>());
    }
    const bool pass = out_width == 2 * width && tied <= 1e-6 && worst_equiv <= 1e-5;
    return {pass, "hybrid width " + std::to_string(out_width) + " (=2C=" + std::to_string(2 * width) +
                      "), frame-vs-global at N=1 " + fmt(tied) + " (<=1e-6), global permutation equivariance " +
                      fmt(worst_equiv) + " (<=1e-5)"};
}

// ---------------------------------------------------------------- shared helpers for 5-8

torch::Tensor stack_images(const std::vector<RenderOutput>& renders) {
    std::vector<torch::Tensor> out;
    for (const auto& r : renders) out.push_back(r.image.permute({2, 0, 1}));
    return torch::stack(out);
}

struct Probe {
    torch::Tensor renders;  // [N, 3, H, W]
    torch::Tensor depth;    // [N, H, W]
    double style3d = 0.0;
    std::array<double, 5> mean_gap{};
};

// One forward pass at the predicted cameras, scored against `style` ([3, H, W]).
Probe probe(StylosModel& model, const SceneBatch& scene, const torch::Tensor& style, const TrainConfig& cfg) {
    torch::NoGradGuard ng;
    model->eval();
    auto images = scene.images_nchw();
    const int64_t n = images.size(0), h = images.size(2), w = images.size(3);
    auto out = model->forward(images.unsqueeze(0), style.unsqueeze(0));
    auto cams = out.camera_tensors(0);
    auto g = model->gaussians(out, 0);
    Probe p;
    p.renders = stack_images(model->render_views(g, cams, h, w));
    p.depth = out.depth.depth[0];

    FeatureExtractor fx;
    auto pr = fx->extract(p.renders), ps = fx->extract(style.unsqueeze(0));
    std::vector<torch::Tensor> pts;
    for (int64_t v = 0; v < n; ++v)
        pts.push_back(unproject_depth(p.depth[v], cams.rotation[v], cams.translation[v], cams.fov[v]));
    PointMap pm{torch::stack(pts), out.depth.confidence[0], torch::ones({n, h, w}, torch::kBool)};
    p.style3d = style_loss_3d(pr, pm, ps, cfg.weights.stage, Style3dOptions{cfg.grid, cfg.fusion, cams.translation})
                    .item<double>();
    for (size_t k = 0; k < 5; ++k) {
        auto mr = pr[k].mean(std::vector<int64_t>{0, 2, 3});
        auto ms = ps[k].mean(std::vector<int64_t>{0, 2, 3});
        p.mean_gap[k] = (mr - ms).norm().item<double>();
    }
    return p;
}

TrainConfig base_config(const fs::path& out) {
    TrainConfig c;
    c.stage = 1;
    c.min_views = 3;
    c.max_views = 3;
    c.synthetic_scenes = 1;
    c.synthetic_views = 3;
    c.resolution = 64;
    c.checkpoint_every = 0;
    c.out_dir = out;
    return c;
}

struct Context {
    fs::path work;
    fs::path stage1_ckpt; // criterion-5 checkpoint
};

// ---------------------------------------------------------------- 5
Outcome stage1_overfit(Context& ctx) {
    Timer timer;
    auto cfg = base_config(ctx.work / "c5");
    cfg.steps = 2000;
    auto data = load_training_data(cfg);
    auto result = train(cfg, data);
    ctx.stage1_ckpt = result.checkpoint;
    const double train_secs = timer.seconds();

    auto model = load_model(Checkpoint::load(result.checkpoint));
    const auto& scene = data.scenes.front();
    auto images = scene.images_nchw();
    auto p = probe(model, scene, images[0], cfg);
    double psnr_sum = 0.0;
    for (int64_t v = 0; v < images.size(0); ++v)
        psnr_sum += psnr(p.renders[v].permute({1, 2, 0}), images[v].permute({1, 2, 0}));
    const double mean_psnr = psnr_sum / static_cast<double>(images.size(0));
    const double depth_err = median_relative_depth_error(p.depth, scene.depths(), scene.masks());
    const bool pass = mean_psnr >= 28.0 && depth_err <= 0.05 && train_secs <= 3600.0;
    return {pass, "PSNR " + fmt(mean_psnr) + " dB (>=28), median relative depth error " + fmt(100 * depth_err, 3) +
                      "% (<=5%), training " + fmt(train_secs, 4) + " s (<=3600)"};
}

// ---------------------------------------------------------------- 6
Outcome stage2_behavior(Context& ctx) {
    if (ctx.stage1_ckpt.empty() || !fs::exists(ctx.stage1_ckpt)) return {false, "criterion-5 checkpoint missing"};
    auto cfg = base_config(ctx.work / "c6");
    cfg.stage = 2;
    cfg.steps = 500;
    cfg.init_checkpoint = ctx.stage1_ckpt;
    auto data = load_training_data(cfg);
    // held out: never seen in stage 1, where the style was a jittered input view
    data.styles = {synthetic_style_image(4242, cfg.resolution)};
    const auto& scene = data.scenes.front();
    auto style = data.styles.front().permute({2, 0, 1});

    auto before_model = load_model(Checkpoint::load(ctx.stage1_ckpt));
    const uint64_t frozen_before = parameter_checksum(before_model->geometry_parameters());
    auto before = probe(before_model, scene, style, cfg);

    auto result = train(cfg, data);
    auto after_model = load_model(Checkpoint::load(result.checkpoint));
    const uint64_t frozen_after = parameter_checksum(after_model->geometry_parameters());
    double delta = 0.0;
    {
        auto a = before_model->geometry_parameters(), b = after_model->geometry_parameters();
        for (size_t i = 0; i < a.size(); ++i) delta += (a[i] - b[i]).abs().sum().item<double>();
    }
    auto after = probe(after_model, scene, style, cfg);
    int closer = 0;
    std::string gaps;
    for (size_t k = 0; k < 5; ++k) {
        if (after.mean_gap[k] < before.mean_gap[k]) ++closer;
        gaps += (k ? ", " : "") + fmt(before.mean_gap[k], 3) + "->" + fmt(after.mean_gap[k], 3);
    }
    const double ratio = after.style3d / before.style3d;
    const bool pass = frozen_before == frozen_after && delta == 0.0 && ratio < 0.6 && closer >= 4;
    return {pass, "(a) frozen delta " + fmt(delta) + ", (b) style_loss_3d " + fmt(before.style3d) + " -> " +
                      fmt(after.style3d) + " = " + fmt(100 * ratio, 3) + "% (<60%), (c) stat means closer at " +
                      std::to_string(closer) + "/5 stages [" + gaps + "]"};
}

// ---------------------------------------------------------------- 7
Outcome consistency_ordering(Context& ctx) {
    Timer timer;
    auto cfg = base_config(ctx.work / "c7");
    cfg.synthetic_views = 10;
    cfg.min_views = 10;
    cfg.max_views = 10;
    cfg.steps = 1000;
    cfg.data_seed = 17;
    auto stage1 = train(cfg, load_training_data(cfg));

    int ordered = 0, runs = 0, wins = 0;
    std::string detail;
    for (uint64_t seed : {1, 2, 3}) {
        auto c = cfg;
        c.stage = 2;
        c.steps = 200;
        c.min_views = 4;
        c.max_views = 6;
        c.seed = seed;
        c.init_checkpoint = stage1.checkpoint;
        c.out_dir = ctx.work / ("c7_seed" + std::to_string(seed));
        fs::create_directories(c.out_dir);
        auto style_path = c.out_dir / "style.png";
        write_png(style_path, synthetic_style_image(500 + seed, c.resolution));
        c.styles = style_path;
        auto rows = ablate_losses(c, {StyleLossKind::image, StyleLossKind::voxel});
        std::map<std::string, double> long_rmse;
        for (const auto& row : rows) {
            if (!row.consistency.has_long) throw GeometryError("long-range pairs missing");
            ++runs;
            const double sr = row.consistency.short_range.rmse, lr = row.consistency.long_range.rmse;
            if (sr <= lr) ++ordered;
            long_rmse[row.loss] = lr;
            detail += " s" + std::to_string(seed) + "/" + row.loss + " " + fmt(sr, 3) + "|" + fmt(lr, 3);
        }
        if (long_rmse.at(to_string(StyleLossKind::voxel)) <= long_rmse.at(to_string(StyleLossKind::image))) ++wins;
    }
    const bool pass = ordered == runs && wins >= 2;
    return {pass, "short<=long in " + std::to_string(ordered) + "/" + std::to_string(runs) +
                      " runs, 3d long <= img long in " + std::to_string(wins) + "/3 seeds; short|long RMSE:" + detail +
                      "; " + fmt(timer.seconds(), 4) + " s"};
}

// ---------------------------------------------------------------- 8
Outcome single_pass(Context& ctx) {
    if (ctx.stage1_ckpt.empty() || !fs::exists(ctx.stage1_ckpt)) return {false, "criterion-5 checkpoint missing"};
    auto model = load_model(Checkpoint::load(ctx.stage1_ckpt));
    auto scene = generate_synthetic_scene(8, 64, 64);
    auto images = scene.images_nchw();
    auto style = synthetic_style_image(88, 64).permute({2, 0, 1});
    bool unchanged = true;
    std::string failures;
    for (int64_t n : {1, 2, 4, 8, 16, 32, 64}) {
        const uint64_t before = parameter_checksum(model->parameters());
        try {
            auto out = stylize(model, images.slice(0, 0, n), style);
            if (static_cast<int64_t>(out.renders.size()) != n) failures += " N=" + std::to_string(n);
        } catch (const std::exception& e) {
            failures += " N=" + std::to_string(n) + "(" + e.what() + ")";
        }
        if (parameter_checksum(model->parameters()) != before) unchanged = false;
    }
    auto rows = bench({1, 2, 4, 8, 16, 32, 64}, 64, ctx.stage1_ckpt);
    bool monotone = rows.size() == 7;
    std::string mem;
    for (size_t i = 0; i < rows.size(); ++i) {
        if (i > 0 && rows[i].peak_mb < rows[i - 1].peak_mb) monotone = false;
        mem += (i ? ", " : "") + std::to_string(rows[i].views) + ":" + fmt(rows[i].peak_mb, 4);
    }
    const bool pass = unchanged && failures.empty() && monotone;
    return {pass, std::string("checksum ") + (unchanged ? "unchanged" : "CHANGED") + ", N=1..64 " +
                      (failures.empty() ? "ok" : "failed:" + failures) + ", peak MiB by N [" + mem + "] " +
                      (monotone ? "nondecreasing" : "NOT nondecreasing")};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stylos acceptance criteria"};
    fs::path work = fs::temp_directory_path() / "stylos_acceptance";
    std::vector<int> only;
    app.add_option("--work", work, "scratch directory for checkpoints");
    app.add_option("--only", only, "criteria to run")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    log::set_level("warn");
    fs::create_directories(work);

    Context ctx{work, {}};
    if (fs::exists(work / "c5" / "stage1_final.ckpt")) ctx.stage1_ckpt = work / "c5" / "stage1_final.ckpt";
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"loss identities", loss_identities},
        {"gradient checks", gradient_suite},
        {"voxel oracle", voxel_oracle},
        {"coupling shapes", coupling_shapes},
        {"stage-1 overfit", [&] { return stage1_overfit(ctx); }},
        {"stage-2 behavior", [&] { return stage2_behavior(ctx); }},
        {"consistency ordering", [&] { return consistency_ordering(ctx); }},
        {"single-pass stylize", [&] { return single_pass(ctx); }},
    };
    std::set<int> selected(only.begin(), only.end());
    int failed = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("criterion %d %-22s %s  %s\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
