#include "stylos/model.hpp"
#include "stylos/errors.hpp"
#include "stylos/sh.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace stylos {

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

void ModelConfig::validate() const {
    backbone.validate();
    if (heads.sh_degree < 0 || heads.sh_degree > kMaxShDegree) {
        throw ConfigError("model.sh_degree must be in [0, " + std::to_string(kMaxShDegree) + "]");
    }
    if (heads.features < 1 || heads.skip_features < 1) throw ConfigError("head feature widths must be positive");
    if (aggregator_depth < 1) throw ConfigError("style.depth must be >= 1");
    if (!(init_fov > 0 && init_fov < std::numbers::pi)) throw ConfigError("model.init_fov_deg must be in (0, 180)");
    if (adapter.voxel_size < 0) throw ConfigError("model.voxel_size must be >= 0");
    if (render.dilation < 0) throw ConfigError("render.dilation must be >= 0");
}

ModelConfig ModelConfig::from_config(const KeyValueConfig& c) {
    ModelConfig m;
    m.backbone.width = c.get_int("model.width", m.backbone.width);
    m.backbone.depth = c.get_int("model.depth", m.backbone.depth);
    m.backbone.heads = c.get_int("model.heads", m.backbone.heads);
    m.backbone.patch_size = c.get_int("model.patch", m.backbone.patch_size);
    m.backbone.mlp_ratio = c.get_int("model.mlp_ratio", m.backbone.mlp_ratio);
    m.backbone.base_grid = c.get_int("model.base_grid", m.backbone.base_grid);
    m.heads.features = c.get_int("model.head_features", m.heads.features);
    m.heads.skip_features = c.get_int("model.skip_features", m.heads.skip_features);
    m.heads.sh_degree = c.get_int("model.sh_degree", m.heads.sh_degree);
    m.init_fov = c.get_double("model.init_fov_deg", m.init_fov * 180.0 / std::numbers::pi) * std::numbers::pi / 180.0;
    m.adapter.voxel_size = c.get_double("model.voxel_size", m.adapter.voxel_size);
    m.coupling = parse_coupling(c.get_string("style.coupling", to_string(m.coupling)));
    m.aggregator_depth = c.get_int("style.depth", m.aggregator_depth);
    auto bg = c.get_doubles("render.background", {m.render.background.begin(), m.render.background.end()});
    if (bg.size() != 3) throw ConfigError("render.background needs 3 values");
    std::copy(bg.begin(), bg.end(), m.render.background.begin());
    m.render.dilation = c.get_double("render.dilation", m.render.dilation);
    m.validate();
    return m;
}

void ModelConfig::to_config(KeyValueConfig& c) const {
    c.set("model.width", std::to_string(backbone.width));
    c.set("model.depth", std::to_string(backbone.depth));
    c.set("model.heads", std::to_string(backbone.heads));
    c.set("model.patch", std::to_string(backbone.patch_size));
    c.set("model.mlp_ratio", std::to_string(backbone.mlp_ratio));
    c.set("model.base_grid", std::to_string(backbone.base_grid));
    c.set("model.head_features", std::to_string(heads.features));
    c.set("model.skip_features", std::to_string(heads.skip_features));
    c.set("model.sh_degree", std::to_string(heads.sh_degree));
    c.set("model.init_fov_deg", num(init_fov * 180.0 / std::numbers::pi));
    c.set("model.voxel_size", num(adapter.voxel_size));
    c.set("style.coupling", to_string(coupling));
    c.set("style.depth", std::to_string(aggregator_depth));
    c.set("render.background",
          num(render.background[0]) + "," + num(render.background[1]) + "," + num(render.background[2]));
    c.set("render.dilation", num(render.dilation));
}

CameraTensors ModelOutput::camera_tensors(int64_t scene) const { return CameraHeadImpl::decode(cameras[scene]); }

StylosModelImpl::StylosModelImpl(const ModelConfig& config) : config_(config) {
    config_.validate();
    const auto& bb = config_.backbone;
    patch_encoder = register_module("patch_encoder", PatchEncoder(bb));
    backbone = register_module("backbone", Backbone(bb));
    aggregator = register_module("aggregator", StyleAggregator(config_.coupling, config_.aggregator_depth, bb.width,
                                                               bb.heads, bb.mlp_ratio));
    geometry_head = register_module("geometry_head", GeometryHead(bb.width, bb.depth, config_.heads));
    depth_head = register_module("depth_head", DepthHead(bb.width, bb.depth, config_.heads));
    style_head = register_module("style_head",
                                 StyleHead(aggregator->out_width(), config_.aggregator_depth, config_.heads));
    camera_head = register_module("camera_head", CameraHead(bb.width, config_.init_fov));
}

ModelOutput StylosModelImpl::forward(const torch::Tensor& images, const torch::Tensor& style, bool geometry_grad) {
    TORCH_CHECK(images.dim() == 5 && images.size(2) == 3, "model expects images [B, N, 3, H, W]");
    TORCH_CHECK(style.dim() == 4 && style.size(1) == 3, "model expects style [B, 3, H, W]");
    ModelOutput out;
    BackboneOutput bb;
    {
        std::optional<torch::NoGradGuard> guard;
        if (!geometry_grad) guard.emplace();
        auto grid = patch_encoder->forward(images);
        bb = backbone->forward(grid);
        out.geometry = geometry_head->forward(bb.layers, grid.grid_h, grid.grid_w, images);
        out.depth = depth_head->forward(bb.layers, grid.grid_h, grid.grid_w, images);
        out.cameras = camera_head->forward(bb.tokens.tokens);
    }
    // the shared encoder is trained by the content path only
    auto style_tokens = patch_encoder->encode_style(style).detach();
    auto agg = aggregator->forward(bb.tokens, style_tokens);
    out.sh = style_head->forward(agg.layers, bb.tokens.grid_h, bb.tokens.grid_w, images);
    return out;
}

GaussianSet StylosModelImpl::gaussians(const ModelOutput& out, int64_t scene) const {
    return gaussian_adapter(out.geometry[scene], out.sh[scene], out.depth.depth[scene], out.depth.confidence[scene],
                            out.camera_tensors(scene), config_.adapter);
}

std::vector<RenderOutput> StylosModelImpl::render_views(const GaussianSet& gaussians, const CameraTensors& cams,
                                                        int64_t height, int64_t width) const {
    std::vector<RenderOutput> views;
    for (int64_t v = 0; v < cams.size(); ++v) views.push_back(render(gaussians, cams.index(v), height, width, config_.render));
    return views;
}

bool StylosModelImpl::is_geometry_parameter(const std::string& name) {
    for (const char* prefix : {"patch_encoder.", "backbone.", "geometry_head.", "depth_head.", "camera_head."}) {
        if (name.rfind(prefix, 0) == 0) return true;
    }
    return false;
}

std::vector<torch::Tensor> StylosModelImpl::geometry_parameters() const {
    std::vector<torch::Tensor> out;
    for (const auto& p : named_parameters()) {
        if (is_geometry_parameter(p.key())) out.push_back(p.value());
    }
    return out;
}

std::vector<torch::Tensor> StylosModelImpl::style_parameters() const {
    std::vector<torch::Tensor> out;
    for (const auto& p : named_parameters()) {
        if (!is_geometry_parameter(p.key())) out.push_back(p.value());
    }
    return out;
}

} // namespace stylos
