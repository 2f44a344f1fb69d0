#include "stylos/style_aggregator.hpp"
#include "stylos/errors.hpp"

namespace stylos {

CouplingMode parse_coupling(const std::string& name) {
    if (name == "frame" || name == "frame_only") return CouplingMode::frame_only;
    if (name == "global" || name == "global_only") return CouplingMode::global_only;
    if (name == "hybrid") return CouplingMode::hybrid;
    throw ConfigError("unknown coupling mode '" + name + "' (expected frame, global or hybrid)");
}

std::string to_string(CouplingMode mode) {
    switch (mode) {
        case CouplingMode::frame_only: return "frame";
        case CouplingMode::global_only: return "global";
        case CouplingMode::hybrid: return "hybrid";
    }
    return "global";
}

CrossBlockImpl::CrossBlockImpl(int64_t width, int64_t heads, int64_t mlp_ratio) {
    auto ln = [&] { return torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})); };
    self_norm = register_module("self_norm", ln());
    self_attn = register_module("self_attn", MultiHeadAttention(width, heads));
    query_norm = register_module("query_norm", ln());
    style_norm = register_module("style_norm", ln());
    cross_attn = register_module("cross_attn", MultiHeadAttention(width, heads));
    mlp_norm = register_module("mlp_norm", ln());
    mlp = register_module("mlp", Mlp(width, width * mlp_ratio));
}

torch::Tensor CrossBlockImpl::cross_attend(const torch::Tensor& queries, const torch::Tensor& style) {
    if (queries.size(-1) != style.size(-1)) {
        throw ConfigError("cross-attention width mismatch: queries " + std::to_string(queries.size(-1)) +
                          ", style " + std::to_string(style.size(-1)));
    }
    auto x = queries + cross_attn(query_norm(queries), style_norm(style));
    return x + mlp(mlp_norm(x));
}

torch::Tensor CrossBlockImpl::forward(const torch::Tensor& queries, const torch::Tensor& style) {
    auto h = self_norm(queries);
    auto x = queries + self_attn(h, h);
    return cross_attend(x, style);
}

CrossStackImpl::CrossStackImpl(int64_t depth, int64_t width, int64_t heads, int64_t mlp_ratio) {
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (int64_t i = 0; i < depth; ++i) blocks->push_back(CrossBlock(width, heads, mlp_ratio));
}

std::vector<torch::Tensor> CrossStackImpl::forward(const torch::Tensor& content, const torch::Tensor& style,
                                                   QueryScope scope) {
    const int64_t b = content.size(0), n = content.size(1), k = content.size(2), c = content.size(3);
    torch::Tensor x, kv;
    if (scope == QueryScope::per_view) {
        // Each view is its own query group; the style tokens are shared by all groups.
        x = content.reshape({b * n, k, c});
        kv = style.unsqueeze(1).expand({b, n, style.size(1), c}).reshape({b * n, style.size(1), c});
    } else {
        x = content.reshape({b, n * k, c});
        kv = style;
    }
    std::vector<torch::Tensor> layers;
    for (const auto& m : *blocks) {
        x = m->as<CrossBlock>()->forward(x, kv);
        layers.push_back(x.view({b, n, k, c}));
    }
    return layers;
}

StyleAggregatorImpl::StyleAggregatorImpl(CouplingMode mode, int64_t depth, int64_t width, int64_t heads,
                                         int64_t mlp_ratio)
    : mode_(mode), width_(width) {
    if (depth < 1) throw ConfigError("aggregator depth must be >= 1");
    if (mode != CouplingMode::global_only) {
        frame_stack = register_module("frame_stack", CrossStack(depth, width, heads, mlp_ratio));
    }
    if (mode != CouplingMode::frame_only) {
        global_stack = register_module("global_stack", CrossStack(depth, width, heads, mlp_ratio));
    }
}

void StyleAggregatorImpl::check_widths(const TokenGrid& content, const torch::Tensor& style) const {
    if (content.channels() != width_ || style.size(-1) != width_) {
        throw ConfigError("aggregator width " + std::to_string(width_) + " does not match content " +
                          std::to_string(content.channels()) + " / style " + std::to_string(style.size(-1)));
    }
    if (style.dim() != 3 || style.size(0) != content.batch()) {
        throw ConfigError("style tokens must be [B, K_s, C] with the content batch size");
    }
}

AggregatorOutput StyleAggregatorImpl::aggregate_frame_only(const TokenGrid& content, const torch::Tensor& style) {
    check_widths(content, style);
    if (!frame_stack) throw ConfigError("aggregator was built without a frame-level stack");
    return {frame_stack->forward(content.tokens, style, QueryScope::per_view)};
}

AggregatorOutput StyleAggregatorImpl::aggregate_global(const TokenGrid& content, const torch::Tensor& style) {
    check_widths(content, style);
    if (!global_stack) throw ConfigError("aggregator was built without a global stack");
    return {global_stack->forward(content.tokens, style, QueryScope::scene)};
}

AggregatorOutput StyleAggregatorImpl::aggregate_hybrid(const TokenGrid& content, const torch::Tensor& style) {
    auto fr = aggregate_frame_only(content, style);
    auto gl = aggregate_global(content, style);
    AggregatorOutput out;
    for (size_t i = 0; i < fr.layers.size(); ++i) out.layers.push_back(torch::cat({fr.layers[i], gl.layers[i]}, -1));
    return out;
}

AggregatorOutput StyleAggregatorImpl::forward(const TokenGrid& content, const torch::Tensor& style) {
    switch (mode_) {
        case CouplingMode::frame_only: return aggregate_frame_only(content, style);
        case CouplingMode::global_only: return aggregate_global(content, style);
        case CouplingMode::hybrid: return aggregate_hybrid(content, style);
    }
    return aggregate_global(content, style);
}

} // namespace stylos
