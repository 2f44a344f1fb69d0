#include "stylos/pipeline.hpp"
#include "stylos/errors.hpp"
#include "stylos/image_io.hpp"

#include "json.hpp"

#include "stylos/log.hpp"
#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>

namespace stylos {

using json = nlohmann::json;

namespace {

json cameras_json(const CameraTensors& cams) {
    json frames = json::array();
    for (const auto& c : cams.to_params()) {
        frames.push_back({{"rotation", c.rotation}, {"translation", c.translation}, {"fov", c.fov}});
    }
    return frames;
}

std::string frame_name(const char* prefix, int64_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04lld%s", prefix, static_cast<long long>(i), ext);
    return buf;
}

} // namespace

StylizeSummary stylize_to_dir(const StylizeRequest& req) {
    auto ckpt = Checkpoint::load(req.checkpoint);
    auto model = load_model(ckpt);
    if (req.coupling && *req.coupling != model->config().coupling) {
        throw ConfigError("checkpoint was trained with coupling '" + to_string(model->config().coupling) +
                          "', requested '" + to_string(*req.coupling) + "'");
    }
    const int64_t res = req.resolution > 0 ? req.resolution : ckpt.config.get_int("data.resolution", 64);
    auto scene = load_image_folder(req.content, req.style, res);

    StylizeSummary summary;
    auto params = model->parameters();
    summary.checksum_before = parameter_checksum(params);
    const auto t0 = std::chrono::steady_clock::now();
    auto result = stylize(model, scene.images_nchw(), scene.style_chw(), req.views_per_batch);
    summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    summary.checksum_after = parameter_checksum(params);
    if (summary.checksum_after != summary.checksum_before) throw InvariantError("stylize modified model parameters");
    summary.views = scene.num_views();
    summary.gaussians = result.gaussians.size();

    std::filesystem::create_directories(req.out);
    json files = json::array();
    for (int64_t i = 0; i < summary.views; ++i) {
        const auto img = frame_name("view", i, ".png");
        const auto dep = frame_name("view", i, ".depth");
        write_png(req.out / img, result.renders[static_cast<size_t>(i)].image);
        write_depth(req.out / dep, result.renders[static_cast<size_t>(i)].depth);
        files.push_back({{"image", img}, {"depth", dep}});
    }
    export_gaussians(result.gaussians, req.out / "gaussians.sgsp", model->config().adapter.voxel_size);
    {
        std::ofstream out(req.out / "cameras.json");
        out << json{{"frames", cameras_json(result.cameras)}}.dump(2) << '\n';
    }
    json manifest = {{"checkpoint", req.checkpoint.string()},
                     {"content", req.content.string()},
                     {"style", req.style.string()},
                     {"coupling", to_string(model->config().coupling)},
                     {"resolution", res},
                     {"views", summary.views},
                     {"views_per_batch", req.views_per_batch},
                     {"gaussians", summary.gaussians},
                     {"seconds", summary.seconds},
                     {"parameter_checksum_before", summary.checksum_before},
                     {"parameter_checksum_after", summary.checksum_after},
                     {"frames", files},
                     {"gaussian_file", "gaussians.sgsp"},
                     {"cameras_file", "cameras.json"}};
    std::ofstream(req.out / "manifest.json") << manifest.dump(2) << '\n';
    return summary;
}

ConsistencyReport scene_consistency(const FeatureExtractor& extractor, const torch::Tensor& renders,
                                    const SceneBatch& scene) {
    auto teacher = teacher_targets(scene);
    auto cams = teacher.cameras.to_params();
    ConsistencyReport rep;
    auto depth = torch::where(teacher.mask, teacher.depth, torch::zeros_like(teacher.depth));
    rep.short_range = consistency(extractor, renders, depth, cams, 1);
    if (scene.num_views() >= 8) {
        rep.long_range = consistency(extractor, renders, depth, cams, 7);
        rep.has_long = true;
    }
    return rep;
}

void evaluate_dirs(const std::filesystem::path& renders_dir, const std::filesystem::path& scene_dir,
                   const std::filesystem::path& report) {
    auto scene = load_scene_folder(scene_dir);
    std::vector<torch::Tensor> renders;
    for (int64_t i = 0; i < scene.num_views(); ++i) {
        const auto path = renders_dir / frame_name("view", i, ".png");
        if (!std::filesystem::exists(path)) throw InputError("missing render " + path.string());
        auto img = read_image(path);
        if (img.size(0) != scene.height() || img.size(1) != scene.width()) {
            img = center_crop_resize(img, scene.height());
        }
        renders.push_back(img);
    }
    auto stacked = torch::stack(renders);
    FeatureExtractor extractor;

    json per_view = json::array();
    double sp = 0, ss = 0, sl = 0;
    for (int64_t i = 0; i < scene.num_views(); ++i) {
        const auto& gt = scene.views[static_cast<size_t>(i)].image;
        const double p = psnr(stacked[i], gt), s = ssim(stacked[i], gt);
        const double l = perceptual_distance(extractor, stacked[i], gt).item<double>();
        per_view.push_back({{"view", i}, {"psnr", p}, {"ssim", s}, {"lpips", l}});
        sp += p;
        ss += s;
        sl += l;
    }
    const auto n = static_cast<double>(scene.num_views());
    json scene_row = {{"scene_id", scene.scene_id},
                      {"views", per_view},
                      {"psnr", sp / n},
                      {"ssim", ss / n},
                      {"lpips", sl / n}};
    if (scene.has_geometry() && scene.num_views() >= 2) {
        auto c = scene_consistency(extractor, stacked, scene);
        scene_row["short_range"] = {{"lpips", c.short_range.perceptual}, {"rmse", c.short_range.rmse}};
        if (c.has_long) scene_row["long_range"] = {{"lpips", c.long_range.perceptual}, {"rmse", c.long_range.rmse}};
    }
    json out = {{"scenes", json::array({scene_row})}, {"mean", scene_row}};
    out["mean"].erase("views");
    out["mean"].erase("scene_id");
    if (report.has_parent_path()) std::filesystem::create_directories(report.parent_path());
    std::ofstream f(report);
    if (!f) throw InputError("cannot write " + report.string());
    f << out.dump(2) << '\n';
}

void reset_peak_memory() {
    std::ofstream f("/proc/self/clear_refs");
    if (f) f << "5";
}

double peak_memory_mb() {
    std::ifstream f("/proc/self/status");
    std::string line;
    while (std::getline(f, line)) {
        if (line.rfind("VmHWM:", 0) == 0) return std::stod(line.substr(6)) / 1024.0;
    }
    rusage ru{};
    getrusage(RUSAGE_SELF, &ru);
    return static_cast<double>(ru.ru_maxrss) / 1024.0;
}

std::vector<BenchRow> bench(std::vector<int64_t> views, int64_t resolution,
                            const std::optional<std::filesystem::path>& checkpoint) {
    std::set<int64_t> sorted(views.begin(), views.end());
    if (sorted.empty() || *sorted.begin() < 1) throw ConfigError("bench: view counts must be >= 1");
    StylosModel model{nullptr};
    if (checkpoint) {
        model = load_model(Checkpoint::load(*checkpoint));
    } else {
        torch::manual_seed(0);
        model = StylosModel(ModelConfig{});
    }
    SyntheticSceneOptions opts;
    opts.patch_size = model->config().backbone.patch_size;
    opts.azimuth_step_deg = 360.0 / static_cast<double>(std::max<int64_t>(*sorted.rbegin(), 36));
    const auto scene = generate_synthetic_scene(7, *sorted.rbegin(), resolution, opts);
    auto style = synthetic_style_image(7, resolution).permute({2, 0, 1});
    auto all = scene.images_nchw();

    std::vector<BenchRow> rows;
    for (int64_t n : sorted) {
        reset_peak_memory();
        const auto t0 = std::chrono::steady_clock::now();
        auto res = stylize(model, all.slice(0, 0, n), style);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back({n, secs, peak_memory_mb()});
        log::debug(c10::str("bench views=", n, " gaussians=", res.gaussians.size()));
    }
    return rows;
}

std::vector<AblationRow> ablate_losses(const TrainConfig& config, const std::vector<StyleLossKind>& losses) {
    if (config.init_checkpoint.empty()) throw ConfigError("stage-1 checkpoint required");
    auto data = load_training_data(config);
    const auto& scene = data.scenes.front();
    FeatureExtractor extractor;
    std::vector<AblationRow> rows;
    for (auto kind : losses) {
        TrainConfig c = config;
        c.stage = 2;
        c.style_loss = kind;
        c.out_dir = config.out_dir / ("ablate_" + to_string(kind));
        auto result = train(c, data, {});
        auto model = load_model(Checkpoint::load(result.checkpoint));
        auto style = data.styles.front().permute({2, 0, 1});
        auto out = stylize(model, scene.images_nchw(), style);
        std::vector<torch::Tensor> imgs;
        for (const auto& r : out.renders) imgs.push_back(r.image);
        AblationRow row;
        row.loss = to_string(kind);
        row.consistency = scene_consistency(extractor, torch::stack(imgs), scene);
        row.checkpoint = result.checkpoint;
        rows.push_back(row);
    }
    return rows;
}

} // namespace stylos
