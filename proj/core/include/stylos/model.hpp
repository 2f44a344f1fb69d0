#pragma once

#include "stylos/backbone.hpp"
#include "stylos/camera.hpp"
#include "stylos/config.hpp"
#include "stylos/gaussians.hpp"
#include "stylos/heads.hpp"
#include "stylos/renderer.hpp"
#include "stylos/style_aggregator.hpp"

#include <torch/torch.h>

#include <string>
#include <vector>

namespace stylos {

/// Architecture and rendering configuration. Config keys:
///   model.width, model.depth, model.heads, model.patch, model.mlp_ratio,
///   model.base_grid, model.head_features, model.skip_features,
///   model.sh_degree, model.init_fov_deg, model.voxel_size,
///   style.coupling (frame|global|hybrid), style.depth,
///   render.background (r,g,b), render.dilation
struct ModelConfig {
    BackboneConfig backbone;
    HeadConfig heads;
    CouplingMode coupling = CouplingMode::global_only;
    int64_t aggregator_depth = 2;
    double init_fov = 1.0471975511965976;
    AdapterOptions adapter;
    RenderSettings render;

    void validate() const;
    static ModelConfig from_config(const KeyValueConfig& config);
    void to_config(KeyValueConfig& config) const;
};

struct ModelOutput {
    torch::Tensor geometry; // [B, N, H, W, 11]
    torch::Tensor sh;       // [B, N, H, W, 3, bands]
    DepthPrediction depth;  // [B, N, H, W]
    torch::Tensor cameras;  // [B, N, 9]: translation, quaternion, fov

    CameraTensors camera_tensors(int64_t scene) const;
};

class StylosModelImpl : public torch::nn::Module {
public:
    explicit StylosModelImpl(const ModelConfig& config);

    /// images [B, N, 3, H, W], style [B, 3, H, W], both in [0, 1].
    /// With geometry_grad false the backbone, geometry, depth and camera paths
    /// run without building a graph (their outputs are constants).
    ModelOutput forward(const torch::Tensor& images, const torch::Tensor& style, bool geometry_grad = true);

    GaussianSet gaussians(const ModelOutput& out, int64_t scene) const;

    /// Renders every camera in `cams`.
    std::vector<RenderOutput> render_views(const GaussianSet& gaussians, const CameraTensors& cams, int64_t height,
                                           int64_t width) const;

    /// Patch encoder, backbone, geometry/depth/camera heads.
    std::vector<torch::Tensor> geometry_parameters() const;
    /// Style aggregator and style head.
    std::vector<torch::Tensor> style_parameters() const;
    /// Parameter names that belong to geometry_parameters().
    static bool is_geometry_parameter(const std::string& name);

    const ModelConfig& config() const { return config_; }

    PatchEncoder patch_encoder{nullptr};
    Backbone backbone{nullptr};
    StyleAggregator aggregator{nullptr};
    GeometryHead geometry_head{nullptr};
    DepthHead depth_head{nullptr};
    StyleHead style_head{nullptr};
    CameraHead camera_head{nullptr};

private:
    ModelConfig config_;
};
TORCH_MODULE(StylosModel);

} // namespace stylos
