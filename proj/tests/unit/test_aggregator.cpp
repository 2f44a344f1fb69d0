#include "gradcheck.hpp"
#include "stylos/errors.hpp"
#include "stylos/style_aggregator.hpp"

#include <gtest/gtest.h>

using namespace stylos;

namespace {

constexpr int64_t kWidth = 16;

StyleAggregator make(CouplingMode mode, int64_t depth = 2) { return StyleAggregator(mode, depth, kWidth, 2, 2); }

TokenGrid content(int64_t n, int64_t k = 4, torch::Dtype dtype = torch::kFloat32) {
    return {torch::randn({1, n, k, kWidth}, dtype), 2, k / 2, 16};
}

void tie_global_to_frame(StyleAggregator& agg) {
    torch::NoGradGuard ng;
    auto src = agg->frame_stack->named_parameters();
    auto dst = agg->global_stack->named_parameters();
    for (const auto& p : src) dst[p.key()].copy_(p.value());
}

} // namespace

TEST(CrossAttention, SingleStyleTokenGivesOneValue) {
    MultiHeadAttention attn(kWidth, 2);
    torch::NoGradGuard ng;
    auto q = torch::randn({1, 5, kWidth});
    auto s = torch::randn({1, 1, kWidth});
    auto out = attn->forward(q, s);
    for (int64_t i = 1; i < 5; ++i) EXPECT_TRUE(torch::allclose(out[0][i], out[0][0], 1e-6, 1e-6));
}

TEST(CrossAttention, DuplicatedStyleTokensChangeNothing) {
    CrossBlock block(kWidth, 2, 2);
    torch::NoGradGuard ng;
    auto q = torch::randn({1, 6, kWidth});
    auto s = torch::randn({1, 3, kWidth});
    auto a = block->cross_attend(q, s);
    auto b = block->cross_attend(q, torch::cat({s, s}, 1));
    EXPECT_LE((a - b).abs().max().item<double>(), 1e-6);
}

TEST(CrossAttention, StylePermutationInvariance) {
    torch::NoGradGuard ng;
    auto s = torch::randn({1, 5, kWidth});
    auto perm = torch::tensor({3, 1, 4, 0, 2}, torch::kLong);
    for (auto mode : {CouplingMode::frame_only, CouplingMode::global_only, CouplingMode::hybrid}) {
        auto agg = make(mode);
        auto c = content(3);
        auto a = agg->forward(c, s).final();
        auto b = agg->forward(c, s.index_select(1, perm)).final();
        EXPECT_LE((a - b).abs().max().item<double>(), 1e-6) << to_string(mode);
    }
}

TEST(CrossAttention, WidthMismatchIsConfigError) {
    CrossBlock block(kWidth, 2, 2);
    EXPECT_THROW(block->cross_attend(torch::randn({1, 2, kWidth}), torch::randn({1, 2, kWidth + 2})), ConfigError);
    auto agg = make(CouplingMode::global_only);
    EXPECT_THROW(agg->forward(content(2), torch::randn({1, 3, kWidth * 2})), ConfigError);
}

TEST(Aggregator, FrameModeKeepsViewsIndependent) {
    auto agg = make(CouplingMode::frame_only);
    torch::NoGradGuard ng;
    auto c = content(3);
    auto s = torch::randn({1, 4, kWidth});
    auto a = agg->forward(c, s).final();
    auto c2 = c;
    c2.tokens = c.tokens.clone();
    c2.tokens[0][1] += torch::randn({4, kWidth});
    auto b = agg->forward(c2, s).final();
    EXPECT_TRUE(torch::equal(a[0][0], b[0][0]));
    EXPECT_TRUE(torch::equal(a[0][2], b[0][2]));
    EXPECT_FALSE(torch::equal(a[0][1], b[0][1]));
    EXPECT_EQ(a.size(-1), kWidth);
}

TEST(Aggregator, GlobalModeMixesViewsAndIsEquivariant) {
    auto agg = make(CouplingMode::global_only);
    torch::NoGradGuard ng;
    auto c = content(4);
    auto s = torch::randn({1, 4, kWidth});
    auto perm = torch::tensor({1, 3, 0, 2}, torch::kLong);
    auto out = agg->forward(c, s).final();
    TokenGrid cp = c;
    cp.tokens = c.tokens.index_select(1, perm);
    auto out_p = agg->forward(cp, s).final();
    EXPECT_LE((out.index_select(1, perm) - out_p).abs().max().item<double>(), 1e-5);
    EXPECT_EQ(out.size(-1), kWidth);
}

TEST(Aggregator, SingleViewFrameEqualsGlobalWithTiedWeights) {
    auto agg = make(CouplingMode::hybrid);
    tie_global_to_frame(agg);
    torch::NoGradGuard ng;
    auto c = content(1);
    auto s = torch::randn({1, 3, kWidth});
    auto fr = agg->aggregate_frame_only(c, s).final();
    auto gl = agg->aggregate_global(c, s).final();
    EXPECT_LE((fr - gl).abs().max().item<double>(), 1e-6);
    auto hy = agg->aggregate_hybrid(c, s).final();
    EXPECT_LE((hy.slice(-1, 0, kWidth) - hy.slice(-1, kWidth)).abs().max().item<double>(), 1e-6);
}

TEST(Aggregator, HybridIsConcatenation) {
    auto agg = make(CouplingMode::hybrid);
    torch::NoGradGuard ng;
    auto c = content(3);
    auto s = torch::randn({1, 3, kWidth});
    auto hy = agg->forward(c, s).final();
    EXPECT_EQ(hy.size(-1), 2 * kWidth);
    EXPECT_EQ(agg->out_width(), 2 * kWidth);
    EXPECT_TRUE(torch::equal(hy.slice(-1, 0, kWidth), agg->aggregate_frame_only(c, s).final()));
    EXPECT_TRUE(torch::equal(hy.slice(-1, kWidth), agg->aggregate_global(c, s).final()));
}

TEST(Aggregator, GradientsReachStyleTokensInEveryMode) {
    for (auto mode : {CouplingMode::frame_only, CouplingMode::global_only, CouplingMode::hybrid}) {
        auto agg = make(mode, 1);
        agg->to(torch::kFloat64);
        auto c = content(2, 4, torch::kFloat64);
        auto w = torch::randn({1, 2, 4, agg->out_width()}, torch::kFloat64);
        auto f = [&](const std::vector<torch::Tensor>& in) {
            TokenGrid g = c;
            g.tokens = in[0];
            return (agg->forward(g, in[1]).final() * w).sum();
        };
        auto s = torch::randn({1, 3, kWidth}, torch::kFloat64).set_requires_grad(true);
        auto loss = f({c.tokens, s});
        auto g = torch::autograd::grad({loss}, {s})[0];
        EXPECT_GT(g.abs().sum().item<double>(), 0.0) << to_string(mode);
        EXPECT_LT(stylos::testing::gradcheck(f, {c.tokens, s.detach()}), 1e-4) << to_string(mode);
    }
}

TEST(Aggregator, ParseCoupling) {
    EXPECT_EQ(parse_coupling("frame"), CouplingMode::frame_only);
    EXPECT_EQ(parse_coupling("global"), CouplingMode::global_only);
    EXPECT_EQ(parse_coupling("hybrid"), CouplingMode::hybrid);
    EXPECT_THROW(parse_coupling("both"), ConfigError);
}
