#pragma once

#include "stylos/camera.hpp"

#include <torch/torch.h>

#include <vector>

namespace stylos {

struct HeadConfig {
    int64_t features = 32;      // DPT fusion channels
    int64_t skip_features = 16; // full-resolution image features
    int64_t sh_degree = 1;

    int64_t sh_bands() const { return (sh_degree + 1) * (sh_degree + 1); }
};

/// Geometry map channel layout.
namespace geometry_channels {
constexpr int64_t scale = 0;    // 3
constexpr int64_t rotation = 3; // 4
constexpr int64_t opacity = 7;  // 1
constexpr int64_t offset = 8;   // 3
constexpr int64_t count = 11;
} // namespace geometry_channels

struct DepthPrediction {
    torch::Tensor depth;      // [B, N, H, W], > 0
    torch::Tensor confidence; // [B, N, H, W], >= 1
};

/// DPT-style head: each token layer is projected and reassembled at its own
/// scale (earlier layers finer), fused coarse-to-fine, upsampled to pixel
/// resolution and refined together with shallow image features.
class DptHeadImpl : public torch::nn::Module {
public:
    DptHeadImpl(int64_t in_dim, int64_t num_layers, int64_t out_channels, const HeadConfig& config);

    /// layers: per-layer tokens [V, K, C_in]; images [V, 3, H, W] -> [V, out, H, W]
    torch::Tensor forward(const std::vector<torch::Tensor>& layers, int64_t grid_h, int64_t grid_w,
                          const torch::Tensor& images);

    int64_t in_dim() const { return in_dim_; }

    torch::nn::ModuleList projections{nullptr}, fusions{nullptr};
    torch::nn::Conv2d skip_conv{nullptr}, refine{nullptr}, output{nullptr};

private:
    int64_t in_dim_;
    int64_t num_layers_;
};
TORCH_MODULE(DptHead);

/// Raw per-pixel geometry maps (11 channels); activations live in the Gaussian adapter.
class GeometryHeadImpl : public torch::nn::Module {
public:
    GeometryHeadImpl(int64_t in_dim, int64_t num_layers, const HeadConfig& config);
    /// layers [B, N, K, C] each; images [B, N, 3, H, W] -> [B, N, H, W, 11]
    torch::Tensor forward(const std::vector<torch::Tensor>& layers, int64_t grid_h, int64_t grid_w,
                          const torch::Tensor& images);
    DptHead dpt{nullptr};
};
TORCH_MODULE(GeometryHead);

class DepthHeadImpl : public torch::nn::Module {
public:
    DepthHeadImpl(int64_t in_dim, int64_t num_layers, const HeadConfig& config);
    DepthPrediction forward(const std::vector<torch::Tensor>& layers, int64_t grid_h, int64_t grid_w,
                            const torch::Tensor& images);
    DptHead dpt{nullptr};
};
TORCH_MODULE(DepthHead);

/// Spherical-harmonic color head over aggregator tokens. The DC band is
/// offset by the content pixel color so rendering starts at the input image.
class StyleHeadImpl : public torch::nn::Module {
public:
    StyleHeadImpl(int64_t in_dim, int64_t num_layers, const HeadConfig& config);
    /// -> [B, N, H, W, 3, (k+1)^2]. Throws ConfigError when the token width
    /// does not match the width this head was built for.
    torch::Tensor forward(const std::vector<torch::Tensor>& layers, int64_t grid_h, int64_t grid_w,
                          const torch::Tensor& images);
    int64_t sh_bands() const { return bands_; }
    DptHead dpt{nullptr};

private:
    int64_t bands_;
};
TORCH_MODULE(StyleHead);

/// Per-view camera regression from pooled backbone tokens. Each view is
/// read together with the first view's pooled tokens, so poses are
/// predicted relative to the first camera. Output is 9 numbers per view:
/// translation (3), quaternion (4, normalized) and fov (2) squashed into (0, pi).
class CameraHeadImpl : public torch::nn::Module {
public:
    CameraHeadImpl(int64_t in_dim, double init_fov);
    /// tokens [B, N, K, C] -> [B, N, 9] activated encoding
    torch::Tensor forward(const torch::Tensor& tokens);
    /// Splits an activated [N, 9] encoding.
    static CameraTensors decode(const torch::Tensor& encoding);

    torch::nn::LayerNorm norm{nullptr};
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(CameraHead);

} // namespace stylos
