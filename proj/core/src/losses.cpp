#include "stylos/losses.hpp"
#include "stylos/errors.hpp"

#include "json.hpp"

#include <cmath>
#include <sstream>

namespace stylos {

void LossWeights::validate() const {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v) || v < 0) throw ConfigError(std::string("loss weight ") + name + " must be finite and >= 0");
    };
    check(style, "style");
    check(content, "content");
    check(clip, "clip");
    check(tv, "tv");
    check(mse, "mse");
    check(distill, "distill");
    for (double a : stage) check(a, "stage_weights");
}

LossWeights LossWeights::from_config(const KeyValueConfig& c) {
    LossWeights w;
    w.style = c.get_double("loss.style", w.style);
    w.content = c.get_double("loss.content", w.content);
    w.clip = c.get_double("loss.clip", w.clip);
    w.tv = c.get_double("loss.tv", w.tv);
    w.mse = c.get_double("loss.mse", w.mse);
    w.distill = c.get_double("loss.distill", w.distill);
    auto sw = c.get_doubles("loss.stage_weights", {w.stage.begin(), w.stage.end()});
    if (sw.size() != 5) throw ConfigError("loss.stage_weights needs 5 values");
    std::copy(sw.begin(), sw.end(), w.stage.begin());
    w.validate();
    return w;
}

void LossWeights::to_config(KeyValueConfig& c) const {
    auto num = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    c.set("loss.style", num(style));
    c.set("loss.content", num(content));
    c.set("loss.clip", num(clip));
    c.set("loss.tv", num(tv));
    c.set("loss.mse", num(mse));
    c.set("loss.distill", num(distill));
    std::string sw;
    for (size_t i = 0; i < stage.size(); ++i) sw += (i ? "," : "") + num(stage[i]);
    c.set("loss.stage_weights", sw);
}

std::string LossReport::to_json_line() const {
    nlohmann::json j;
    j["step"] = step;
    j["stage"] = stage;
    j["total"] = total;
    for (const auto& [name, t] : components) {
        j["components"][name] = {{"value", t.value}, {"weight", t.weight}, {"weighted", t.weighted}};
    }
    for (const auto& [name, v] : extras) j["extras"][name] = v;
    return j.dump();
}

bool LossReport::total_consistent(double tol) const {
    double sum = 0.0;
    for (const auto& [name, t] : components) sum += t.weighted;
    return std::abs(sum - total) <= tol * std::max(1.0, std::abs(total));
}

namespace {

void check_stage_count(const FeaturePyramid& a, const FeaturePyramid& b) {
    if (a.size() != 5 || b.size() != 5) throw ConfigError("feature pyramids must have 5 stages");
    for (size_t k = 0; k < 5; ++k) {
        if (a[k].dim() != 4 || b[k].dim() != 4 || a[k].size(1) != b[k].size(1)) {
            throw ConfigError("feature pyramid stage " + std::to_string(k + 1) + " shapes do not match");
        }
    }
}

torch::Tensor stat_distance(const torch::Tensor& mu, const torch::Tensor& sd, const torch::Tensor& mu_s,
                            const torch::Tensor& sd_s) {
    return (mu - mu_s).pow(2).sum(-1) + (sd - sd_s).pow(2).sum(-1);
}

} // namespace

torch::Tensor style_loss_image(const FeaturePyramid& rendered, const FeaturePyramid& style,
                               const std::array<double, 5>& alpha) {
    check_stage_count(rendered, style);
    torch::Tensor loss;
    for (size_t k = 0; k < 5; ++k) {
        auto [mu, sd] = mean_std(rendered[k]);     // [S, C]
        auto [mu_s, sd_s] = mean_std(style[k][0]); // [C]
        auto term = alpha[k] * stat_distance(mu, sd, mu_s, sd_s).mean();
        loss = loss.defined() ? loss + term : term;
    }
    return loss;
}

torch::Tensor style_loss_scene(const FeaturePyramid& rendered, const FeaturePyramid& style,
                               const std::array<double, 5>& alpha) {
    check_stage_count(rendered, style);
    torch::Tensor loss;
    for (size_t k = 0; k < 5; ++k) {
        const auto& f = rendered[k];
        if (f.dim() != 4) throw ConfigError("style_loss_scene expects [S, C, H, W] stages");
        auto concat = f.permute({1, 0, 2, 3}).flatten(1); // [C, S*H*W]
        auto [mu, sd] = mean_std(concat);
        auto [mu_s, sd_s] = mean_std(style[k][0]);
        auto term = alpha[k] * stat_distance(mu, sd, mu_s, sd_s);
        loss = loss.defined() ? loss + term : term;
    }
    return loss;
}

FusionMode parse_fusion(const std::string& name) {
    if (name == "scene") return FusionMode::scene;
    if (name == "per_view") return FusionMode::per_view;
    throw ConfigError("unknown fusion mode '" + name + "' (expected scene or per_view)");
}

torch::Tensor style_loss_3d(const FeaturePyramid& rendered, const PointMap& points, const FeaturePyramid& style,
                            const std::array<double, 5>& alpha, const Style3dOptions& options) {
    check_stage_count(rendered, style);
    PointMap pm = points.detach();
    if (options.camera_centers.defined()) pm = normalize_scene_scale(pm, options.camera_centers);
    const GridSpec grid = fit_grid(pm, options.grid);
    const int64_t views = pm.views();

    torch::Tensor loss;
    for (size_t k = 0; k < 5; ++k) {
        const auto& f = rendered[k];
        if (f.size(0) != views) throw ConfigError("style_loss_3d: pyramid and point map view counts differ");
        auto level = resize_to_level(pm, f.size(2), f.size(3));
        auto [mu_s, sd_s] = mean_std(style[k][0]);
        torch::Tensor term;
        if (options.fusion == FusionMode::scene) {
            auto [mu, sd] = voxel_stats(voxelize(f, level, grid));
            term = stat_distance(mu, sd, mu_s, sd_s);
        } else {
            std::vector<torch::Tensor> per_view;
            for (int64_t s = 0; s < views; ++s) {
                auto [mu, sd] = voxel_stats(voxelize(f.slice(0, s, s + 1), level.select_views(s, s + 1), grid));
                per_view.push_back(stat_distance(mu, sd, mu_s, sd_s));
            }
            term = torch::stack(per_view).mean();
        }
        term = alpha[k] * term;
        loss = loss.defined() ? loss + term : term;
    }
    return loss;
}

torch::Tensor content_loss(const FeaturePyramid& rendered, const FeaturePyramid& content) {
    check_stage_count(rendered, content);
    return (rendered[3] - content[3]).pow(2).mean() + (rendered[4] - content[4]).pow(2).mean();
}

torch::Tensor tv_loss(const torch::Tensor& images) {
    TORCH_CHECK(images.dim() >= 2 && images.size(-1) >= 2 && images.size(-2) >= 2, "tv_loss needs H, W >= 2");
    auto dx = images.slice(-1, 1) - images.slice(-1, 0, -1);
    auto dy = images.slice(-2, 1) - images.slice(-2, 0, -1);
    return dx.pow(2).mean() + dy.pow(2).mean();
}

torch::Tensor semantic_loss(const torch::Tensor& rendered, const torch::Tensor& style, const SemanticEncoder& encoder) {
    auto e_r = encoder.embed(rendered);
    auto e_s = encoder.embed(style.dim() == 3 ? style.unsqueeze(0) : style);
    auto cos = (e_r * e_s).sum(-1);
    return (1.0 - cos).clamp(0.0, 2.0).mean();
}

torch::Tensor reconstruction_loss(const torch::Tensor& rendered, const torch::Tensor& content) {
    TORCH_CHECK(rendered.sizes() == content.sizes(), "reconstruction_loss: shape mismatch");
    return (rendered - content).pow(2).mean();
}

DistillTerms distillation_loss(const torch::Tensor& depth, const CameraTensors& cams, const torch::Tensor& teacher_depth,
                               const CameraTensors& teacher_cams, const torch::Tensor& mask) {
    if (!teacher_depth.defined() || !teacher_cams.rotation.defined()) {
        throw ConfigError("distillation requires depth and pose targets");
    }
    const int64_t v = depth.size(0);
    auto tdepth = teacher_depth.to(depth.scalar_type());
    std::vector<torch::Tensor> per_view;
    for (int64_t i = 0; i < v; ++i) {
        auto m = mask[i].to(torch::kBool) & torch::isfinite(tdepth[i]) & (tdepth[i] > 0);
        auto d = depth[i].masked_select(m);
        auto t = tdepth[i].masked_select(m);
        if (d.numel() == 0) continue;
        per_view.push_back((d / d.median() - t / t.median()).abs().mean());
    }
    DistillTerms out;
    out.depth = per_view.empty() ? depth.sum() * 0.0 : torch::stack(per_view).mean();
    auto tq = teacher_cams.rotation.to(depth.scalar_type());
    auto dot = (cams.rotation * tq).sum(-1);
    out.rotation = (1.0 - dot.pow(2)).mean();
    out.translation = (cams.translation - teacher_cams.translation.to(depth.scalar_type())).pow(2).sum(-1).mean();
    out.fov = (cams.fov - teacher_cams.fov.to(depth.scalar_type())).pow(2).sum(-1).mean();
    return out;
}

StageLoss stage_total(const std::map<std::string, torch::Tensor>& components, const LossWeights& w, int stage) {
    std::vector<std::pair<std::string, double>> terms;
    if (stage == 1) {
        terms = {{"rec", w.mse}, {"distill", w.distill}};
    } else if (stage == 2) {
        terms = {{"rec", w.mse}, {"style3d", w.style}, {"content", w.content}, {"clip", w.clip}, {"tv", w.tv}};
    } else {
        throw ConfigError("stage must be 1 or 2");
    }
    StageLoss out;
    out.report.stage = stage;
    torch::Tensor total;
    for (const auto& [name, weight] : terms) {
        auto it = components.find(name);
        if (it == components.end() || !it->second.defined()) {
            if (weight != 0.0) throw ConfigError("loss component '" + name + "' missing for stage " + std::to_string(stage));
            out.report.components[name] = {0.0, weight, 0.0};
            continue;
        }
        const auto& value = it->second;
        auto weighted = value * weight;
        total = total.defined() ? total + weighted : weighted;
        const double v = value.item<double>();
        out.report.components[name] = {v, weight, v * weight};
    }
    if (!total.defined()) throw ConfigError("no loss components for stage " + std::to_string(stage));
    out.total = total;
    double sum = 0.0;
    for (const auto& [name, t] : out.report.components) sum += t.weighted;
    // Report the double-precision sum so the identity holds independent of tensor dtype.
    out.report.total = sum;
    out.report.extras["total_tensor"] = total.item<double>();
    return out;
}

} // namespace stylos
