#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <memory>
#include <utility>
#include <vector>

namespace stylos {

/// Five feature maps [B, C_k, H / 2^(k-1), W / 2^(k-1)], k = 1..5.
struct FeaturePyramid {
    std::vector<torch::Tensor> stages;

    size_t size() const { return stages.size(); }
    const torch::Tensor& operator[](size_t k) const { return stages[k]; }
    /// Stage tensors restricted to batch rows [begin, end).
    FeaturePyramid slice(int64_t begin, int64_t end) const;
};

constexpr std::array<int64_t, 5> kPyramidWidths{16, 32, 64, 64, 64};

/// Frozen random convolutional pyramid. Stage 1 is a 3x3 conv + ReLU at full
/// resolution; each later stage average-pools by 2 then applies 3x3 conv + ReLU.
/// Weights are He-normal from a fixed seed and never receive gradients.
class FeatureExtractorImpl : public torch::nn::Module {
public:
    explicit FeatureExtractorImpl(uint64_t seed = 1234);

    /// images [B, 3, H, W] in [0, 1] (float or double) -> pyramid in the input dtype.
    FeaturePyramid extract(const torch::Tensor& images) const;

    /// Replaces the weights with those in an archive written by save_weights
    /// (same stage contract).
    void load_weights(const std::filesystem::path& path);
    void save_weights(const std::filesystem::path& path) const;

    std::vector<torch::Tensor> weights, biases;
};
TORCH_MODULE(FeatureExtractor);

/// Channel mean and population std over the last two (spatial) dims:
/// [..., C, H, W] -> ([..., C], [..., C]); std = sqrt(var + 1e-8).
/// Throws InputError for an empty spatial extent.
std::pair<torch::Tensor, torch::Tensor> mean_std(const torch::Tensor& features);

/// Image embedding used by the semantic loss; implementations return unit-norm rows.
class SemanticEncoder {
public:
    virtual ~SemanticEncoder() = default;
    /// images [B, 3, H, W] -> [B, D], unit norm
    virtual torch::Tensor embed(const torch::Tensor& images) const = 0;
};

/// Stand-in encoder: normalized concatenation of per-stage channel statistics
/// of the frozen pyramid.
class PyramidStatsEncoder : public SemanticEncoder {
public:
    explicit PyramidStatsEncoder(FeatureExtractor extractor);
    torch::Tensor embed(const torch::Tensor& images) const override;

private:
    FeatureExtractor extractor_;
};

} // namespace stylos
