#include "stylos/errors.hpp"
#include "stylos/log.hpp"
#include "stylos/pipeline.hpp"
#include "stylos/scene_data.hpp"
#include "stylos/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace stylos;

namespace {

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

KeyValueConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    auto cfg = KeyValueConfig::load(path);
    for (const auto& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feed-forward 3D style transfer with Gaussian splats"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "debug, info, warn, error or off");

    // gen-scene
    auto* gen = app.add_subcommand("gen-scene", "Write a synthetic scene folder");
    uint64_t gen_seed = 0;
    int64_t gen_views = 3, gen_res = 64;
    std::string gen_out;
    gen->add_option("--seed", gen_seed, "Scene seed");
    gen->add_option("--views", gen_views, "Number of orbit views")->check(CLI::PositiveNumber);
    gen->add_option("--res", gen_res, "Square resolution")->check(CLI::PositiveNumber);
    gen->add_option("--out", gen_out, "Output folder")->required();

    // train
    auto* tr = app.add_subcommand("train", "Run training stage 1 or 2");
    int tr_stage = 1;
    std::string tr_config, tr_resume;
    std::vector<std::string> tr_set;
    tr->add_option("--stage", tr_stage, "Training stage")->check(CLI::IsMember({1, 2}));
    tr->add_option("--config", tr_config, "Key-value config file")->required()->check(CLI::ExistingFile);
    tr->add_option("--resume", tr_resume, "Checkpoint to start from (stage-1 checkpoint for stage 2)");
    tr->add_option("--set", tr_set, "Override config entries, key=value");

    // stylize
    auto* sty = app.add_subcommand("stylize", "Single forward pass: content views + style -> stylized splats");
    StylizeRequest req;
    std::string sty_coupling;
    sty->add_option("--ckpt", req.checkpoint, "Checkpoint")->required();
    sty->add_option("--content", req.content, "Folder of content views")->required();
    sty->add_option("--style", req.style, "Style image")->required();
    sty->add_option("--out", req.out, "Output folder")->required();
    sty->add_option("--coupling", sty_coupling, "frame, global or hybrid (must match the checkpoint)")
        ->check(CLI::IsMember({"frame", "global", "hybrid"}));
    sty->add_option("--views-per-batch", req.views_per_batch, "Chunk size for large view counts (0: all at once)");
    sty->add_option("--res", req.resolution, "Working resolution (default: from the checkpoint)");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Metric report for a stylize output against a scene folder");
    std::string ev_renders, ev_scene, ev_out;
    ev->add_option("--renders", ev_renders, "stylize output folder")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--scene", ev_scene, "Scene folder")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--out", ev_out, "Report path (JSON)")->required();

    // bench
    auto* be = app.add_subcommand("bench", "Time and peak memory per view count");
    std::string be_views = "1,2,4,8,16,32,64";
    int64_t be_res = 64;
    std::string be_ckpt, be_json;
    be->add_option("--views", be_views, "Comma-separated view counts");
    be->add_option("--res", be_res, "Resolution")->check(CLI::PositiveNumber);
    be->add_option("--ckpt", be_ckpt, "Checkpoint (default: random initialization)");
    be->add_option("--json", be_json, "Also write the table as JSON");

    // ablate-loss
    auto* ab = app.add_subcommand("ablate-loss", "Compare stage-2 style losses by consistency");
    std::string ab_config, ab_losses = "img,scene,3d", ab_out;
    std::vector<std::string> ab_set;
    ab->add_option("--config", ab_config, "Stage-2 config (train.init = stage-1 checkpoint)")->required()->check(CLI::ExistingFile);
    ab->add_option("--losses", ab_losses, "Comma-separated subset of img,scene,3d");
    ab->add_option("--out", ab_out, "Write the table as JSON");
    ab->add_option("--set", ab_set, "Override config entries, key=value");

    CLI11_PARSE(app, argc, argv);

    try {
        log::set_level(log_level);
        apply_determinism_from_env();

        if (*gen) {
            auto scene = generate_synthetic_scene(gen_seed, gen_views, gen_res);
            save_scene_folder(scene, gen_out);
            std::cout << "wrote " << gen_views << " views to " << gen_out << '\n';
        } else if (*tr) {
            auto kv = load_config(tr_config, tr_set);
            kv.set("train.stage", std::to_string(tr_stage));
            if (!tr_resume.empty()) kv.set("train.init", tr_resume);
            auto cfg = TrainConfig::from_config(kv);
            if (cfg.stage == 2 && cfg.init_checkpoint.empty()) throw ConfigError("stage-1 checkpoint required");
            if (!cfg.init_checkpoint.empty() && !std::filesystem::exists(cfg.init_checkpoint)) {
                throw InputError("checkpoint not found: " + cfg.init_checkpoint.string());
            }
            auto data = load_training_data(cfg);
            auto result = train(cfg, data);
            std::cout << "checkpoint " << result.checkpoint.string() << '\n';
        } else if (*sty) {
            if (!sty_coupling.empty()) req.coupling = parse_coupling(sty_coupling);
            auto s = stylize_to_dir(req);
            std::cout << "stylized " << s.views << " views into " << s.gaussians << " Gaussians in " << s.seconds
                      << " s\n";
        } else if (*ev) {
            evaluate_dirs(ev_renders, ev_scene, ev_out);
            std::cout << "report " << ev_out << '\n';
        } else if (*be) {
            std::vector<int64_t> views;
            for (const auto& v : split(be_views)) {
                try {
                    views.push_back(std::stoll(v));
                } catch (const std::exception&) {
                    throw ConfigError("bad view count '" + v + "'");
                }
            }
            auto rows = bench(views, be_res, be_ckpt.empty() ? std::nullopt : std::optional<std::filesystem::path>(be_ckpt));
            std::printf("%8s %12s %12s\n", "views", "seconds", "peak_mb");
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : rows) {
                std::printf("%8lld %12.4f %12.1f\n", static_cast<long long>(r.views), r.seconds, r.peak_mb);
                j.push_back({{"views", r.views}, {"seconds", r.seconds}, {"peak_mb", r.peak_mb}});
            }
            if (!be_json.empty()) std::ofstream(be_json) << j.dump(2) << '\n';
        } else if (*ab) {
            auto kv = load_config(ab_config, ab_set);
            kv.set("train.stage", "2");
            auto cfg = TrainConfig::from_config(kv);
            std::vector<StyleLossKind> kinds;
            for (const auto& l : split(ab_losses)) kinds.push_back(parse_style_loss(l));
            if (kinds.empty()) throw ConfigError("--losses is empty");
            auto rows = ablate_losses(cfg, kinds);
            std::printf("%-8s %12s %12s %12s %12s\n", "loss", "short_lpips", "short_rmse", "long_lpips", "long_rmse");
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : rows) {
                const auto& c = r.consistency;
                std::printf("%-8s %12.4f %12.4f %12s %12s\n", r.loss.c_str(), c.short_range.perceptual,
                            c.short_range.rmse, c.has_long ? std::to_string(c.long_range.perceptual).c_str() : "-",
                            c.has_long ? std::to_string(c.long_range.rmse).c_str() : "-");
                nlohmann::json row = {{"loss", r.loss},
                                      {"short_range", {{"lpips", c.short_range.perceptual}, {"rmse", c.short_range.rmse}}}};
                if (c.has_long) row["long_range"] = {{"lpips", c.long_range.perceptual}, {"rmse", c.long_range.rmse}};
                j.push_back(row);
            }
            if (!ab_out.empty()) std::ofstream(ab_out) << j.dump(2) << '\n';
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        if (auto nl = msg.find('\n'); nl != std::string::npos) msg = msg.substr(0, nl);
        std::cerr << "error: " << msg << '\n';
        return 1;
    }
    return 0;
}
