#pragma once

#include "stylos/backbone.hpp"

#include <torch/torch.h>

#include <string>
#include <vector>

namespace stylos {

/// How content queries meet the style keys/values.
enum class CouplingMode { frame_only, global_only, hybrid };

/// Accepts the config spellings "frame", "global", "hybrid".
CouplingMode parse_coupling(const std::string& name);
std::string to_string(CouplingMode mode);

/// Whether a CrossBlock's self-attention mixes tokens within one view or across the whole scene.
enum class QueryScope { per_view, scene };

/// Self-attention over the query set, then cross-attention from content
/// queries to style keys/values, then a feed-forward sublayer; all pre-norm
/// with residuals.
class CrossBlockImpl : public torch::nn::Module {
public:
    CrossBlockImpl(int64_t width, int64_t heads, int64_t mlp_ratio);

    /// queries [L, T, C], style [L, K_s, C] -> [L, T, C]
    torch::Tensor forward(const torch::Tensor& queries, const torch::Tensor& style);
    /// Cross-attention and feed-forward sublayers only (no self-attention).
    torch::Tensor cross_attend(const torch::Tensor& queries, const torch::Tensor& style);

    torch::nn::LayerNorm self_norm{nullptr}, query_norm{nullptr}, style_norm{nullptr}, mlp_norm{nullptr};
    MultiHeadAttention self_attn{nullptr}, cross_attn{nullptr};
    Mlp mlp{nullptr};
};
TORCH_MODULE(CrossBlock);

/// A stack of CrossBlocks applied with one query scope.
class CrossStackImpl : public torch::nn::Module {
public:
    CrossStackImpl(int64_t depth, int64_t width, int64_t heads, int64_t mlp_ratio);

    /// content [B, N, K, C], style [B, K_s, C] -> per-layer outputs, each [B, N, K, C]
    std::vector<torch::Tensor> forward(const torch::Tensor& content, const torch::Tensor& style, QueryScope scope);

    torch::nn::ModuleList blocks{nullptr};
};
TORCH_MODULE(CrossStack);

struct AggregatorOutput {
    std::vector<torch::Tensor> layers; // [B, N, K, C] (or 2C for hybrid) per CrossBlock
    torch::Tensor final() const { return layers.back(); }
};

class StyleAggregatorImpl : public torch::nn::Module {
public:
    StyleAggregatorImpl(CouplingMode mode, int64_t depth, int64_t width, int64_t heads, int64_t mlp_ratio);

    AggregatorOutput forward(const TokenGrid& content, const torch::Tensor& style);

    AggregatorOutput aggregate_frame_only(const TokenGrid& content, const torch::Tensor& style);
    AggregatorOutput aggregate_global(const TokenGrid& content, const torch::Tensor& style);
    /// Channel concatenation [frame || global]; output width 2C.
    AggregatorOutput aggregate_hybrid(const TokenGrid& content, const torch::Tensor& style);

    CouplingMode mode() const { return mode_; }
    int64_t out_width() const { return mode_ == CouplingMode::hybrid ? 2 * width_ : width_; }

    /// Present for frame_only and hybrid.
    CrossStack frame_stack{nullptr};
    /// Present for global_only and hybrid.
    CrossStack global_stack{nullptr};

private:
    void check_widths(const TokenGrid& content, const torch::Tensor& style) const;

    CouplingMode mode_;
    int64_t width_;
};
TORCH_MODULE(StyleAggregator);

} // namespace stylos
