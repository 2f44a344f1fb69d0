#include "stylos/heads.hpp"
#include "stylos/errors.hpp"
#include "stylos/sh.hpp"

#include <cmath>
#include <numbers>

namespace stylos {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv3x3(int64_t in, int64_t out) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
}

torch::Tensor upsample(const torch::Tensor& x, int64_t h, int64_t w) {
    if (x.size(2) == h && x.size(3) == w) return x;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{h, w})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

std::vector<torch::Tensor> flatten_views(const std::vector<torch::Tensor>& layers) {
    std::vector<torch::Tensor> out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(l.flatten(0, 1));
    return out;
}

} // namespace

DptHeadImpl::DptHeadImpl(int64_t in_dim, int64_t num_layers, int64_t out_channels, const HeadConfig& config)
    : in_dim_(in_dim), num_layers_(num_layers) {
    projections = register_module("projections", torch::nn::ModuleList());
    fusions = register_module("fusions", torch::nn::ModuleList());
    for (int64_t i = 0; i < num_layers; ++i) {
        projections->push_back(torch::nn::Linear(in_dim, config.features));
        fusions->push_back(conv3x3(config.features, config.features));
    }
    skip_conv = register_module("skip_conv", conv3x3(3, config.skip_features));
    refine = register_module("refine", conv3x3(config.features + config.skip_features, config.features));
    output = register_module("output", torch::nn::Conv2d(torch::nn::Conv2dOptions(config.features, out_channels, 1)));
}

torch::Tensor DptHeadImpl::forward(const std::vector<torch::Tensor>& layers, int64_t grid_h, int64_t grid_w,
                                   const torch::Tensor& images) {
    if (static_cast<int64_t>(layers.size()) != num_layers_) {
        throw ConfigError("DPT head expects " + std::to_string(num_layers_) + " token layers, got " +
                          std::to_string(layers.size()));
    }
    for (const auto& l : layers) {
        if (l.size(-1) != in_dim_) {
            throw ConfigError("head input width " + std::to_string(l.size(-1)) + " does not match " +
                              std::to_string(in_dim_));
        }
    }
    const int64_t v = images.size(0), h = images.size(2), w = images.size(3);
    // Reassemble: layer i lives at grid * 2^(L-1-i).
    std::vector<torch::Tensor> maps;
    for (int64_t i = 0; i < num_layers_; ++i) {
        auto proj = projections[static_cast<size_t>(i)]->as<torch::nn::Linear>()->forward(layers[static_cast<size_t>(i)]);
        auto grid = proj.transpose(1, 2).reshape({v, proj.size(-1), grid_h, grid_w});
        const int64_t f = int64_t{1} << (num_layers_ - 1 - i);
        maps.push_back(upsample(grid, grid_h * f, grid_w * f));
    }
    auto fused = torch::relu(fusions[static_cast<size_t>(num_layers_ - 1)]->as<torch::nn::Conv2d>()->forward(maps.back()));
    for (int64_t i = num_layers_ - 2; i >= 0; --i) {
        const auto& target = maps[static_cast<size_t>(i)];
        fused = upsample(fused, target.size(2), target.size(3)) + target;
        fused = torch::relu(fusions[static_cast<size_t>(i)]->as<torch::nn::Conv2d>()->forward(fused));
    }
    fused = upsample(fused, h, w);
    auto skip = torch::relu(skip_conv((images - 0.5) * 2.0));
    auto x = torch::relu(refine(torch::cat({fused, skip}, 1)));
    return output(x);
}

GeometryHeadImpl::GeometryHeadImpl(int64_t in_dim, int64_t num_layers, const HeadConfig& config) {
    dpt = register_module("dpt", DptHead(in_dim, num_layers, geometry_channels::count, config));
    torch::NoGradGuard ng;
    dpt->output->weight.mul_(0.1);
    auto b = dpt->output->bias;
    b.zero_();
    b.slice(0, geometry_channels::scale, geometry_channels::scale + 3).fill_(-0.5);
    b[geometry_channels::rotation] = 1.0;
    b[geometry_channels::opacity] = 2.0;
}

torch::Tensor GeometryHeadImpl::forward(const std::vector<torch::Tensor>& layers, int64_t grid_h, int64_t grid_w,
                                        const torch::Tensor& images) {
    const int64_t b = images.size(0), n = images.size(1);
    auto out = dpt->forward(flatten_views(layers), grid_h, grid_w, images.flatten(0, 1));
    return out.permute({0, 2, 3, 1}).reshape({b, n, out.size(2), out.size(3), geometry_channels::count});
}

DepthHeadImpl::DepthHeadImpl(int64_t in_dim, int64_t num_layers, const HeadConfig& config) {
    dpt = register_module("dpt", DptHead(in_dim, num_layers, 2, config));
    torch::NoGradGuard ng;
    dpt->output->weight.mul_(0.1);
    dpt->output->bias.zero_();
}

DepthPrediction DepthHeadImpl::forward(const std::vector<torch::Tensor>& layers, int64_t grid_h, int64_t grid_w,
                                       const torch::Tensor& images) {
    const int64_t b = images.size(0), n = images.size(1), h = images.size(3), w = images.size(4);
    auto out = dpt->forward(flatten_views(layers), grid_h, grid_w, images.flatten(0, 1));
    DepthPrediction pred;
    pred.depth = torch::exp(out.select(1, 0).clamp(-10.0, 10.0)).view({b, n, h, w});
    pred.confidence = (1.0 + F::softplus(out.select(1, 1))).view({b, n, h, w});
    return pred;
}

StyleHeadImpl::StyleHeadImpl(int64_t in_dim, int64_t num_layers, const HeadConfig& config)
    : bands_(config.sh_bands()) {
    if (config.sh_degree < 0 || config.sh_degree > kMaxShDegree) {
        throw ConfigError("unsupported SH degree " + std::to_string(config.sh_degree));
    }
    dpt = register_module("dpt", DptHead(in_dim, num_layers, 3 * bands_, config));
    torch::NoGradGuard ng;
    dpt->output->weight.zero_();
    dpt->output->bias.zero_();
}

torch::Tensor StyleHeadImpl::forward(const std::vector<torch::Tensor>& layers, int64_t grid_h, int64_t grid_w,
                                     const torch::Tensor& images) {
    const int64_t b = images.size(0), n = images.size(1), h = images.size(3), w = images.size(4);
    auto flat_images = images.flatten(0, 1);
    auto out = dpt->forward(flatten_views(layers), grid_h, grid_w, flat_images); // [V, 3*nb, H, W]
    auto coeffs = out.permute({0, 2, 3, 1}).reshape({b * n, h, w, 3, bands_});
    // DC offset so that eval_sh returns the input color for zero residual.
    auto dc = ((flat_images.permute({0, 2, 3, 1}) - 0.5) / kShC0).unsqueeze(-1); // [V, H, W, 3, 1]
    auto offset = torch::cat({dc, torch::zeros({b * n, h, w, 3, bands_ - 1}, dc.options())}, -1);
    return (coeffs + offset).view({b, n, h, w, 3, bands_});
}

CameraHeadImpl::CameraHeadImpl(int64_t in_dim, double init_fov) {
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({2 * in_dim})));
    fc1 = register_module("fc1", torch::nn::Linear(2 * in_dim, in_dim));
    fc2 = register_module("fc2", torch::nn::Linear(in_dim, 9));
    torch::NoGradGuard ng;
    fc2->weight.mul_(0.01);
    fc2->bias.zero_();
    fc2->bias[3] = 1.0; // identity quaternion
    const double p = init_fov / std::numbers::pi;
    fc2->bias[7] = std::log(p / (1 - p));
    fc2->bias[8] = std::log(p / (1 - p));
}

torch::Tensor CameraHeadImpl::forward(const torch::Tensor& tokens) {
    auto pooled = tokens.mean(2); // [B, N, C]
    auto reference = pooled.slice(1, 0, 1).expand_as(pooled);
    auto raw = fc2(F::gelu(fc1(norm(torch::cat({pooled, reference}, -1)))));
    auto t = raw.slice(-1, 0, 3);
    auto q = raw.slice(-1, 3, 7);
    q = q / q.norm(2, -1, true).clamp_min(1e-8);
    auto fov = std::numbers::pi * torch::sigmoid(raw.slice(-1, 7, 9));
    return torch::cat({t, q, fov}, -1);
}

CameraTensors CameraHeadImpl::decode(const torch::Tensor& encoding) {
    return {encoding.slice(-1, 3, 7), encoding.slice(-1, 0, 3), encoding.slice(-1, 7, 9)};
}

} // namespace stylos
