#include "stylos/trainer.hpp"
#include "stylos/bounded_queue.hpp"
#include "stylos/errors.hpp"
#include "stylos/image_io.hpp"

#include "stylos/log.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

namespace stylos {

StyleLossKind parse_style_loss(const std::string& name) {
    if (name == "img" || name == "image") return StyleLossKind::image;
    if (name == "scene") return StyleLossKind::scene;
    if (name == "3d" || name == "voxel") return StyleLossKind::voxel;
    throw ConfigError("unknown style loss '" + name + "' (expected img, scene or 3d)");
}

std::string to_string(StyleLossKind kind) {
    switch (kind) {
    case StyleLossKind::image: return "img";
    case StyleLossKind::scene: return "scene";
    case StyleLossKind::voxel: return "3d";
    }
    return "3d";
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto b = item.find_first_not_of(" \t");
        auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2) throw ConfigError("train.stage must be 1 or 2");
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (batch_scenes < 1) throw ConfigError("train.batch_scenes must be >= 1");
    if (min_views < 1 || max_views < min_views) throw ConfigError("views per scene must satisfy 1 <= min <= max");
    if (!(lr > 0)) throw ConfigError("train.lr must be positive");
    if (lr_final_ratio < 0 || lr_final_ratio > 1) throw ConfigError("train.lr_final_ratio must be in [0, 1]");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
    if (grid.resolution < 1) throw ConfigError("voxel.resolution must be >= 1");
    if (resolution % model.backbone.patch_size != 0) throw ConfigError("data.resolution must be a multiple of model.patch");
    weights.validate();
    model.validate();
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& c) {
    TrainConfig t;
    t.raw = c;
    t.stage = static_cast<int>(c.get_int("train.stage", t.stage));
    t.steps = c.get_int("train.steps", t.steps);
    t.batch_scenes = c.get_int("train.batch_scenes", t.batch_scenes);
    t.min_views = c.get_int("train.min_views", t.min_views);
    t.max_views = c.get_int("train.max_views", t.max_views);
    t.lr = c.get_double("train.lr", t.lr);
    t.lr_final_ratio = c.get_double("train.lr_final_ratio", t.lr_final_ratio);
    t.grad_clip = c.get_double("train.grad_clip", t.grad_clip);
    t.seed = static_cast<uint64_t>(c.get_int("train.seed", 0));
    t.checkpoint_every = c.get_int("train.checkpoint_every", t.checkpoint_every);
    t.out_dir = c.get_string("train.out", t.out_dir.string());
    t.init_checkpoint = c.get_string("train.init", "");
    t.style_loss = parse_style_loss(c.get_string("train.style_loss", "3d"));
    t.grid.resolution = c.get_int("voxel.resolution", t.grid.resolution);
    t.fusion = parse_fusion(c.get_string("voxel.fusion", "scene"));
    t.weights = LossWeights::from_config(c);
    t.model = ModelConfig::from_config(c);
    for (const auto& s : split_list(c.get_string("data.scenes", ""))) t.scene_dirs.emplace_back(s);
    t.styles = c.get_string("data.styles", "");
    t.synthetic_scenes = c.get_int("data.synthetic_scenes", t.synthetic_scenes);
    t.synthetic_views = c.get_int("data.synthetic_views", t.synthetic_views);
    t.resolution = c.get_int("data.resolution", t.resolution);
    t.data_seed = static_cast<uint64_t>(c.get_int("data.seed", 0));
    t.validate();
    return t;
}

KeyValueConfig TrainConfig::to_config() const {
    KeyValueConfig c = raw;
    c.set("train.stage", std::to_string(stage));
    c.set("train.steps", std::to_string(steps));
    c.set("train.batch_scenes", std::to_string(batch_scenes));
    c.set("train.min_views", std::to_string(min_views));
    c.set("train.max_views", std::to_string(max_views));
    c.set("train.lr", num(lr));
    c.set("train.lr_final_ratio", num(lr_final_ratio));
    c.set("train.grad_clip", num(grad_clip));
    c.set("train.seed", std::to_string(seed));
    c.set("train.checkpoint_every", std::to_string(checkpoint_every));
    c.set("train.out", out_dir.string());
    c.set("train.style_loss", to_string(style_loss));
    c.set("voxel.resolution", std::to_string(grid.resolution));
    c.set("voxel.fusion", fusion == FusionMode::scene ? "scene" : "per_view");
    c.set("data.resolution", std::to_string(resolution));
    weights.to_config(c);
    model.to_config(c);
    return c;
}

TrainingData load_training_data(const TrainConfig& config) {
    TrainingData data;
    if (!config.scene_dirs.empty()) {
        for (const auto& dir : config.scene_dirs) data.scenes.push_back(load_scene_folder(dir));
    } else {
        SyntheticSceneOptions opts;
        opts.patch_size = config.model.backbone.patch_size;
        for (int64_t i = 0; i < config.synthetic_scenes; ++i) {
            data.scenes.push_back(generate_synthetic_scene(config.data_seed + static_cast<uint64_t>(i),
                                                           config.synthetic_views, config.resolution, opts));
        }
    }
    if (!config.styles.empty()) {
        std::vector<std::filesystem::path> files;
        if (std::filesystem::is_directory(config.styles)) {
            for (const auto& e : std::filesystem::directory_iterator(config.styles)) {
                auto ext = e.path().extension().string();
                std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
                if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
        } else {
            files.push_back(config.styles);
        }
        for (const auto& f : files) data.styles.push_back(center_crop_resize(read_image(f), config.resolution));
        if (data.styles.empty()) throw InputError("no style images in " + config.styles.string());
    } else if (config.stage == 2) {
        data.styles.push_back(synthetic_style_image(config.data_seed + 1000, config.resolution));
    }
    return data;
}

TeacherTargets teacher_targets(const SceneBatch& scene) {
    if (!scene.has_geometry()) throw ConfigError("distillation requires depth and pose targets");
    TeacherTargets t;
    auto depth = scene.depths().to(torch::kFloat32);
    t.mask = scene.masks().to(torch::kBool) & torch::isfinite(depth) & (depth > 0);
    auto valid = depth.masked_select(t.mask);
    if (valid.numel() == 0) throw GeometryError("teacher targets: no valid depth");
    t.scale = valid.median().item<double>();
    t.depth = depth / t.scale;

    const auto poses = scene.poses();
    const auto r0 = quaternion_to_matrix(poses[0].rotation);
    const auto& c0 = poses[0].translation;
    std::vector<CameraParams> rel;
    for (const auto& p : poses) {
        const auto ri = quaternion_to_matrix(p.rotation);
        std::array<double, 9> r{};
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int k = 0; k < 3; ++k) r[a * 3 + b] += r0[k * 3 + a] * ri[k * 3 + b];
        CameraParams q;
        q.rotation = matrix_to_quaternion(r);
        for (int a = 0; a < 3; ++a) {
            double v = 0.0;
            for (int k = 0; k < 3; ++k) v += r0[k * 3 + a] * (p.translation[k] - c0[k]);
            q.translation[a] = v / t.scale;
        }
        q.fov = p.fov;
        rel.push_back(q);
    }
    t.cameras = CameraTensors::from_params(rel, torch::kFloat32);
    return t;
}

bool apply_determinism_from_env() {
    const char* env = std::getenv("STYLOS_DETERMINISTIC");
    const bool on = env != nullptr && std::string(env) == "1";
    if (on) {
        torch::set_num_threads(1);
        at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/true);
    }
    return on;
}

StylosModel load_model(const Checkpoint& ckpt) {
    StylosModel model(ModelConfig::from_config(ckpt.config));
    restore_module(*model, ckpt);
    return model;
}

Checkpoint make_checkpoint(const StylosModel& model, int stage, int64_t step, const KeyValueConfig& extra) {
    Checkpoint ck;
    ck.config = extra;
    model->config().to_config(ck.config);
    ck.stage = stage;
    ck.step = step;
    store_module(*model, ck);
    return ck;
}

namespace {

struct StepBatch {
    int64_t step = 0;
    torch::Tensor images;        // [B, V, 3, H, W]
    torch::Tensor style;         // [B, 3, H, W]
    std::vector<TeacherTargets> teachers;
};

uint64_t step_seed(uint64_t seed, int64_t step) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(step + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

StepBatch make_batch(const TrainConfig& cfg, const TrainingData& data, int64_t step) {
    std::mt19937_64 rng(step_seed(cfg.seed, step));
    StepBatch batch;
    batch.step = step;
    int64_t min_n = std::numeric_limits<int64_t>::max();
    for (const auto& s : data.scenes) min_n = std::min(min_n, s.num_views());
    const int64_t lo = std::min(cfg.min_views, min_n), hi = std::min(cfg.max_views, min_n);
    const int64_t n = std::uniform_int_distribution<int64_t>(lo, hi)(rng);

    std::vector<torch::Tensor> images, styles;
    for (int64_t b = 0; b < cfg.batch_scenes; ++b) {
        const auto& scene = data.scenes[std::uniform_int_distribution<size_t>(0, data.scenes.size() - 1)(rng)];
        std::vector<int64_t> ids(static_cast<size_t>(scene.num_views()));
        std::iota(ids.begin(), ids.end(), 0);
        std::shuffle(ids.begin(), ids.end(), rng);
        ids.resize(static_cast<size_t>(n));
        auto sub = scene.subset(ids);
        images.push_back(sub.images_nchw());
        if (cfg.stage == 1) {
            const auto pick = std::uniform_int_distribution<int64_t>(0, n - 1)(rng);
            auto jittered = color_jitter(sub.views[static_cast<size_t>(pick)].image, rng());
            styles.push_back(jittered.permute({2, 0, 1}));
            batch.teachers.push_back(teacher_targets(sub));
        } else {
            const auto& st = data.styles[std::uniform_int_distribution<size_t>(0, data.styles.size() - 1)(rng)];
            styles.push_back(st.permute({2, 0, 1}));
        }
    }
    batch.images = torch::stack(images).contiguous();
    batch.style = torch::stack(styles).contiguous();
    return batch;
}

torch::Tensor stack_renders(const std::vector<RenderOutput>& renders) {
    std::vector<torch::Tensor> imgs;
    for (const auto& r : renders) imgs.push_back(r.image.permute({2, 0, 1}));
    return torch::stack(imgs); // [V, 3, H, W]
}

void set_lr(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

} // namespace

TrainResult train(const TrainConfig& cfg, const TrainingData& data, const StepCallback& on_step) {
    cfg.validate();
    if (data.scenes.empty()) throw InputError("no training scenes");
    if (cfg.stage == 2 && cfg.init_checkpoint.empty()) throw ConfigError("stage-1 checkpoint required");
    if (cfg.stage == 2 && data.styles.empty()) throw InputError("stage 2 needs at least one style image");
    apply_determinism_from_env();
    std::filesystem::create_directories(cfg.out_dir);

    torch::manual_seed(cfg.seed);
    StylosModel model{nullptr};
    int64_t start_step = 0;
    std::optional<Checkpoint> init;
    if (!cfg.init_checkpoint.empty()) {
        init = Checkpoint::load(cfg.init_checkpoint);
        model = load_model(*init);
        if (init->stage == cfg.stage) start_step = init->step; // resume
    } else {
        model = StylosModel(cfg.model);
    }

    std::vector<torch::Tensor> trainable;
    std::vector<torch::Tensor> frozen;
    if (cfg.stage == 1) {
        trainable = model->parameters();
    } else {
        trainable = model->style_parameters();
        frozen = model->geometry_parameters();
        for (auto& p : frozen) p.set_requires_grad(false);
    }
    const uint64_t frozen_sum = parameter_checksum(frozen);

    torch::optim::Adam opt(trainable, torch::optim::AdamOptions(cfg.lr));
    if (init && start_step > 0) restore_adam(opt, *model, *init);

    FeatureExtractor extractor;
    PyramidStatsEncoder encoder(extractor);
    const auto tag = "stage" + std::to_string(cfg.stage);
    const auto extra = cfg.to_config();

    auto save = [&](int64_t step, const std::filesystem::path& path) {
        auto ck = make_checkpoint(model, cfg.stage, step, extra);
        store_adam(opt, *model, ck);
        ck.save(path);
    };

    TrainResult result;
    std::ofstream jsonl(cfg.out_dir / (tag + "_losses.jsonl"), start_step > 0 ? std::ios::app : std::ios::trunc);

    BoundedQueue<StepBatch> queue(4);
    std::thread producer([&] {
        try {
            for (int64_t s = start_step; s < cfg.steps; ++s) {
                if (!queue.push(make_batch(cfg, data, s))) return;
            }
        } catch (const std::exception& e) {
            log::error(std::string("data worker: ") + e.what());
        }
        queue.close();
    });
    struct Join {
        std::thread& t;
        BoundedQueue<StepBatch>& q;
        ~Join() {
            q.close();
            if (t.joinable()) t.join();
        }
    } joiner{producer, queue};

    model->train();
    for (int64_t step = start_step; step < cfg.steps; ++step) {
        auto batch_opt = queue.pop();
        if (!batch_opt) throw InputError("data worker stopped early");
        auto& batch = *batch_opt;
        const double progress = cfg.steps > 0 ? static_cast<double>(step) / static_cast<double>(cfg.steps) : 0.0;
        const double lr_min = cfg.lr * cfg.lr_final_ratio;
        set_lr(opt, lr_min + 0.5 * (cfg.lr - lr_min) * (1.0 + std::cos(std::numbers::pi * progress)));

        const int64_t bsz = batch.images.size(0), views = batch.images.size(1);
        const int64_t h = batch.images.size(3), w = batch.images.size(4);
        auto out = model->forward(batch.images, batch.style, cfg.stage == 1);

        std::map<std::string, torch::Tensor> comps;
        std::map<std::string, double> extras;
        auto accumulate = [&](const std::string& k, const torch::Tensor& v) {
            auto scaled = v / static_cast<double>(bsz);
            comps[k] = comps.count(k) ? comps[k] + scaled : scaled;
        };
        for (int64_t b = 0; b < bsz; ++b) {
            auto g = model->gaussians(out, b);
            auto cams = out.camera_tensors(b);
            auto rendered = stack_renders(model->render_views(g, cams, h, w));
            auto content = batch.images[b];
            accumulate("rec", reconstruction_loss(rendered, content));
            if (cfg.stage == 1) {
                const auto& t = batch.teachers[static_cast<size_t>(b)];
                auto d = distillation_loss(out.depth.depth[b], cams, t.depth, t.cameras, t.mask);
                accumulate("distill", d.total());
                extras["distill_depth"] += d.depth.item<double>() / static_cast<double>(bsz);
                extras["distill_rotation"] += d.rotation.item<double>() / static_cast<double>(bsz);
                extras["distill_translation"] += d.translation.item<double>() / static_cast<double>(bsz);
                extras["distill_fov"] += d.fov.item<double>() / static_cast<double>(bsz);
            } else {
                auto pyr_r = extractor->extract(rendered);
                FeaturePyramid pyr_s, pyr_c;
                {
                    torch::NoGradGuard ng;
                    pyr_s = extractor->extract(batch.style.slice(0, b, b + 1));
                    pyr_c = extractor->extract(content);
                }
                torch::Tensor style_term;
                if (cfg.style_loss == StyleLossKind::image) {
                    style_term = style_loss_image(pyr_r, pyr_s, cfg.weights.stage);
                } else if (cfg.style_loss == StyleLossKind::scene) {
                    style_term = style_loss_scene(pyr_r, pyr_s, cfg.weights.stage);
                } else {
                    std::vector<torch::Tensor> pts;
                    auto dep = out.depth.depth[b].detach();
                    auto cams_d = cams.detach();
                    for (int64_t v = 0; v < views; ++v) {
                        pts.push_back(unproject_depth(dep[v], cams_d.rotation[v], cams_d.translation[v], cams_d.fov[v]));
                    }
                    PointMap pm{torch::stack(pts), out.depth.confidence[b].detach(),
                                torch::ones({views, h, w}, torch::kBool)};
                    Style3dOptions o{cfg.grid, cfg.fusion, cams_d.translation};
                    style_term = style_loss_3d(pyr_r, pm, pyr_s, cfg.weights.stage, o);
                }
                accumulate("style3d", style_term);
                accumulate("content", content_loss(pyr_r, pyr_c));
                accumulate("tv", tv_loss(rendered));
                if (cfg.weights.clip > 0) accumulate("clip", semantic_loss(rendered, batch.style.slice(0, b, b + 1), encoder));
            }
        }
        auto total = stage_total(comps, cfg.weights, cfg.stage);
        total.report.step = step;
        total.report.extras.insert(extras.begin(), extras.end());
        total.report.extras["lr"] = static_cast<torch::optim::AdamOptions&>(opt.param_groups()[0].options()).lr();
        total.report.extras["views"] = static_cast<double>(views);
        if (!std::isfinite(total.report.total)) {
            throw InvariantError("non-finite loss at step " + std::to_string(step) +
                                 "; keeping the last good checkpoint");
        }

        opt.zero_grad();
        total.total.backward();
        if (cfg.grad_clip > 0) torch::nn::utils::clip_grad_norm_(trainable, cfg.grad_clip);
        opt.step();

        if (!frozen.empty() && parameter_checksum(frozen) != frozen_sum) {
            throw InvariantError("frozen geometry parameters changed at step " + std::to_string(step));
        }
        jsonl << total.report.to_json_line() << '\n';
        jsonl.flush();
        if (on_step) on_step(total.report);
        result.history.push_back(total.report);
        ++result.steps_run;
        if (step == start_step || (step + 1) % 100 == 0) {
            log::info(c10::str(tag, " step ", step + 1, "/", cfg.steps, " loss ", total.report.total));
        }
        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps) {
            save(step + 1, cfg.out_dir / (tag + "_step" + std::to_string(step + 1) + ".ckpt"));
        }
    }
    result.checkpoint = cfg.out_dir / (tag + "_final.ckpt");
    save(std::max(cfg.steps, start_step), result.checkpoint);
    return result;
}

StylizeResult stylize(StylosModel& model, const torch::Tensor& images, const torch::Tensor& style,
                      int64_t views_per_batch) {
    TORCH_CHECK(images.dim() == 4 && images.size(1) == 3, "stylize expects images [N, 3, H, W]");
    torch::NoGradGuard ng;
    model->eval();
    const int64_t n = images.size(0), h = images.size(2), w = images.size(3);
    const int64_t chunk = views_per_batch > 1 ? views_per_batch : n;
    auto style_b = style.unsqueeze(0);

    std::vector<GaussianSet> sets;
    std::vector<torch::Tensor> rot, trans, fov, depth;
    int64_t next = 0;
    while (next < n) {
        std::vector<int64_t> ids;
        const bool with_ref = next > 0;
        if (with_ref) ids.push_back(0);
        while (next < n && static_cast<int64_t>(ids.size()) < chunk) ids.push_back(next++);
        auto idx = torch::tensor(ids, torch::kLong);
        auto out = model->forward(images.index_select(0, idx).unsqueeze(0), style_b, false);
        const int64_t skip = with_ref ? 1 : 0;
        auto cams = out.camera_tensors(0);
        CameraTensors keep{cams.rotation.slice(0, skip), cams.translation.slice(0, skip), cams.fov.slice(0, skip)};
        sets.push_back(gaussian_adapter(out.geometry[0].slice(0, skip), out.sh[0].slice(0, skip),
                                        out.depth.depth[0].slice(0, skip), out.depth.confidence[0].slice(0, skip),
                                        keep, model->config().adapter));
        rot.push_back(keep.rotation);
        trans.push_back(keep.translation);
        fov.push_back(keep.fov);
        depth.push_back(out.depth.depth[0].slice(0, skip));
    }
    StylizeResult res;
    res.gaussians = sets.size() == 1 ? sets[0] : voxel_merge(GaussianSet::concat(sets), model->config().adapter.voxel_size);
    res.cameras = {torch::cat(rot), torch::cat(trans), torch::cat(fov)};
    res.depth = torch::cat(depth);
    res.renders = model->render_views(res.gaussians, res.cameras, h, w);
    return res;
}

} // namespace stylos
