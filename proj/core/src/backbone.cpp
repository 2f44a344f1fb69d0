#include "stylos/backbone.hpp"
#include "stylos/errors.hpp"

#include <cmath>

namespace stylos {

namespace F = torch::nn::functional;

void BackboneConfig::validate() const {
    if (depth < 1) throw ConfigError("backbone depth must be >= 1");
    if (width < 1 || heads < 1 || width % heads != 0) {
        throw ConfigError("backbone width " + std::to_string(width) + " is not divisible by heads " +
                          std::to_string(heads));
    }
    if (patch_size < 1) throw ConfigError("patch size must be positive");
    if (base_grid < 1) throw ConfigError("positional base grid must be positive");
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(int64_t width, int64_t heads) : heads_(heads) {
    if (width % heads != 0) throw ConfigError("attention width must be divisible by heads");
    q_proj = register_module("q_proj", torch::nn::Linear(width, width));
    k_proj = register_module("k_proj", torch::nn::Linear(width, width));
    v_proj = register_module("v_proj", torch::nn::Linear(width, width));
    out_proj = register_module("out_proj", torch::nn::Linear(width, width));
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& context) {
    const int64_t l = query.size(0), tq = query.size(1), tk = context.size(1), c = query.size(2);
    if (context.size(2) != c) {
        throw ConfigError("attention width mismatch: queries " + std::to_string(c) + ", keys " +
                          std::to_string(context.size(2)));
    }
    const int64_t d = c / heads_;
    auto q = q_proj(query).view({l, tq, heads_, d}).transpose(1, 2);
    auto k = k_proj(context).view({l, tk, heads_, d}).transpose(1, 2);
    auto v = v_proj(context).view({l, tk, heads_, d}).transpose(1, 2);
    auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(d));
    auto out = torch::matmul(torch::softmax(scores, -1), v);
    return out_proj(out.transpose(1, 2).reshape({l, tq, c}));
}

MlpImpl::MlpImpl(int64_t width, int64_t hidden) {
    fc1 = register_module("fc1", torch::nn::Linear(width, hidden));
    fc2 = register_module("fc2", torch::nn::Linear(hidden, width));
}

torch::Tensor MlpImpl::forward(const torch::Tensor& x) { return fc2(F::gelu(fc1(x))); }

SelfAttentionBlockImpl::SelfAttentionBlockImpl(int64_t width, int64_t heads, int64_t mlp_ratio) {
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
    attn = register_module("attn", MultiHeadAttention(width, heads));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
    mlp = register_module("mlp", Mlp(width, width * mlp_ratio));
}

torch::Tensor SelfAttentionBlockImpl::forward(const torch::Tensor& x) {
    auto h = norm1(x);
    auto y = x + attn(h, h);
    return y + mlp(norm2(y));
}

PatchEncoderImpl::PatchEncoderImpl(const BackboneConfig& config) : config_(config) {
    config_.validate();
    proj = register_module("proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, config.width, config.patch_size)
                                                         .stride(config.patch_size)));
    pos_embed = register_parameter(
        "pos_embed", 0.02 * torch::randn({1, config.width, config.base_grid, config.base_grid}));
}

torch::Tensor PatchEncoderImpl::embed(const torch::Tensor& images, int64_t& gh, int64_t& gw) {
    const int64_t h = images.size(2), w = images.size(3), p = config_.patch_size;
    if (h % p != 0 || w % p != 0) {
        throw ConfigError("image size " + std::to_string(h) + "x" + std::to_string(w) +
                          " is not divisible by patch size " + std::to_string(p));
    }
    gh = h / p;
    gw = w / p;
    // Centered inputs keep the random-init embedding well conditioned.
    auto x = proj((images - 0.5) * 2.0); // [V, C, gh, gw]
    auto pos = pos_embed;
    if (gh != config_.base_grid || gw != config_.base_grid) {
        pos = F::interpolate(pos_embed, F::InterpolateFuncOptions()
                                            .size(std::vector<int64_t>{gh, gw})
                                            .mode(torch::kBilinear)
                                            .align_corners(false));
    }
    x = x + pos;
    return x.flatten(2).transpose(1, 2); // [V, K, C]
}

TokenGrid PatchEncoderImpl::forward(const torch::Tensor& images) {
    TORCH_CHECK(images.dim() == 5 && images.size(2) == 3, "patch_encode expects [B, N, 3, H, W]");
    const int64_t b = images.size(0), n = images.size(1);
    TokenGrid grid;
    auto tokens = embed(images.flatten(0, 1), grid.grid_h, grid.grid_w);
    grid.tokens = tokens.view({b, n, tokens.size(1), tokens.size(2)});
    grid.patch_size = config_.patch_size;
    return grid;
}

torch::Tensor PatchEncoderImpl::encode_style(const torch::Tensor& style) {
    TORCH_CHECK(style.dim() == 4 && style.size(1) == 3, "style encoder expects [B, 3, H, W]");
    int64_t gh = 0, gw = 0;
    return embed(style, gh, gw);
}

BackboneImpl::BackboneImpl(const BackboneConfig& config) : config_(config) {
    config_.validate();
    frame_blocks = register_module("frame_blocks", torch::nn::ModuleList());
    global_blocks = register_module("global_blocks", torch::nn::ModuleList());
    for (int64_t i = 0; i < config.depth; ++i) {
        frame_blocks->push_back(SelfAttentionBlock(config.width, config.heads, config.mlp_ratio));
        global_blocks->push_back(SelfAttentionBlock(config.width, config.heads, config.mlp_ratio));
    }
}

torch::Tensor BackboneImpl::frame_block(int64_t i, const torch::Tensor& x) {
    const int64_t b = x.size(0), n = x.size(1), k = x.size(2), c = x.size(3);
    auto y = frame_blocks[static_cast<size_t>(i)]->as<SelfAttentionBlock>()->forward(x.reshape({b * n, k, c}));
    return y.view({b, n, k, c});
}

torch::Tensor BackboneImpl::global_block(int64_t i, const torch::Tensor& x) {
    const int64_t b = x.size(0), n = x.size(1), k = x.size(2), c = x.size(3);
    auto y = global_blocks[static_cast<size_t>(i)]->as<SelfAttentionBlock>()->forward(x.reshape({b, n * k, c}));
    return y.view({b, n, k, c});
}

BackboneOutput BackboneImpl::forward(const TokenGrid& input) {
    if (input.channels() != config_.width) {
        throw ConfigError("token width " + std::to_string(input.channels()) + " does not match backbone width " +
                          std::to_string(config_.width));
    }
    BackboneOutput out;
    auto x = input.tokens;
    for (int64_t i = 0; i < config_.depth; ++i) {
        x = frame_block(i, x);
        x = global_block(i, x);
        out.layers.push_back(x);
    }
    out.tokens = input;
    out.tokens.tokens = x;
    return out;
}

} // namespace stylos
