#pragma once

#include <torch/torch.h>

#include <vector>

namespace stylos {

struct BackboneConfig {
    int64_t depth = 2;      // alternating (frame, global) block pairs
    int64_t width = 128;    // token channels C
    int64_t heads = 4;
    int64_t patch_size = 16;
    int64_t mlp_ratio = 4;
    int64_t base_grid = 4;  // learned positional grid; resampled for other resolutions

    void validate() const;
};

/// Patch tokens for B scenes of N views: tokens is [B, N, K, C] with K = grid_h * grid_w.
struct TokenGrid {
    torch::Tensor tokens;
    int64_t grid_h = 0;
    int64_t grid_w = 0;
    int64_t patch_size = 0;

    int64_t batch() const { return tokens.size(0); }
    int64_t views() const { return tokens.size(1); }
    int64_t num_tokens() const { return tokens.size(2); }
    int64_t channels() const { return tokens.size(3); }
};

/// Multi-head attention with separate query and key/value inputs; with
/// the same tensor for both it is plain self-attention.
class MultiHeadAttentionImpl : public torch::nn::Module {
public:
    MultiHeadAttentionImpl(int64_t width, int64_t heads);

    /// query [L, Tq, C], context [L, Tk, C] -> [L, Tq, C]
    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& context);

    torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};

private:
    int64_t heads_;
};
TORCH_MODULE(MultiHeadAttention);

class MlpImpl : public torch::nn::Module {
public:
    MlpImpl(int64_t width, int64_t hidden);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(Mlp);

/// Pre-norm transformer block: x + attn(norm(x)), then x + mlp(norm(x)).
class SelfAttentionBlockImpl : public torch::nn::Module {
public:
    SelfAttentionBlockImpl(int64_t width, int64_t heads, int64_t mlp_ratio);
    torch::Tensor forward(const torch::Tensor& x); // [L, T, C]

    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    MultiHeadAttention attn{nullptr};
    Mlp mlp{nullptr};
};
TORCH_MODULE(SelfAttentionBlock);

/// Linear patch embedding plus learned per-frame 2D positional encoding.
/// One instance embeds both content views and the style image.
class PatchEncoderImpl : public torch::nn::Module {
public:
    explicit PatchEncoderImpl(const BackboneConfig& config);

    /// images [B, N, 3, H, W] -> TokenGrid. Throws ConfigError if H or W is
    /// not divisible by the patch size.
    TokenGrid forward(const torch::Tensor& images);
    /// Style image [B, 3, H, W] -> tokens [B, K_s, C].
    torch::Tensor encode_style(const torch::Tensor& style);

    torch::nn::Conv2d proj{nullptr};
    torch::Tensor pos_embed; // [1, C, base_grid, base_grid]

private:
    torch::Tensor embed(const torch::Tensor& images, int64_t& gh, int64_t& gw); // [V,3,H,W] -> [V,K,C]
    BackboneConfig config_;
};
TORCH_MODULE(PatchEncoder);

struct BackboneOutput {
    TokenGrid tokens;                 // final layer
    std::vector<torch::Tensor> layers; // output after each block pair, [B, N, K, C]
};

/// Alternating frame-wise and global self-attention over TokenGrids.
class BackboneImpl : public torch::nn::Module {
public:
    explicit BackboneImpl(const BackboneConfig& config);

    BackboneOutput forward(const TokenGrid& input);

    /// Frame attention over each view's K tokens: [B, N, K, C] -> same.
    torch::Tensor frame_block(int64_t i, const torch::Tensor& x);
    /// Global attention over all N*K tokens of a scene: [B, N, K, C] -> same.
    torch::Tensor global_block(int64_t i, const torch::Tensor& x);

    torch::nn::ModuleList frame_blocks{nullptr}, global_blocks{nullptr};

private:
    BackboneConfig config_;
};
TORCH_MODULE(Backbone);

} // namespace stylos
