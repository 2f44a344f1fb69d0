#include "stylos/feature_extractor.hpp"
#include "stylos/errors.hpp"

#include <cmath>

namespace stylos {

namespace F = torch::nn::functional;

FeaturePyramid FeaturePyramid::slice(int64_t begin, int64_t end) const {
    FeaturePyramid out;
    for (const auto& s : stages) out.stages.push_back(s.slice(0, begin, end));
    return out;
}

FeatureExtractorImpl::FeatureExtractorImpl(uint64_t seed) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    int64_t in = 3;
    for (size_t k = 0; k < kPyramidWidths.size(); ++k) {
        const int64_t out = kPyramidWidths[k];
        const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
        auto w = at::normal(0.0, std, {out, in, 3, 3}, gen, torch::TensorOptions().dtype(torch::kFloat32));
        auto b = torch::zeros({out});
        weights.push_back(register_parameter("w" + std::to_string(k + 1), w, /*requires_grad=*/false));
        biases.push_back(register_parameter("b" + std::to_string(k + 1), b, /*requires_grad=*/false));
        in = out;
    }
}

FeaturePyramid FeatureExtractorImpl::extract(const torch::Tensor& images) const {
    TORCH_CHECK(images.dim() == 4 && images.size(1) == 3, "extract expects [B, 3, H, W]");
    FeaturePyramid pyr;
    auto x = (images - 0.45) / 0.25;
    for (size_t k = 0; k < weights.size(); ++k) {
        if (k > 0) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
        x = torch::relu(F::conv2d(x, weights[k].to(x.scalar_type()),
                                  F::Conv2dFuncOptions().bias(biases[k].to(x.scalar_type())).padding(1)));
        pyr.stages.push_back(x);
    }
    return pyr;
}

void FeatureExtractorImpl::save_weights(const std::filesystem::path& path) const {
    std::vector<torch::Tensor> all;
    for (size_t k = 0; k < weights.size(); ++k) {
        all.push_back(weights[k]);
        all.push_back(biases[k]);
    }
    torch::save(all, path.string());
}

void FeatureExtractorImpl::load_weights(const std::filesystem::path& path) {
    std::vector<torch::Tensor> all;
    try {
        torch::load(all, path.string());
    } catch (const c10::Error& e) {
        throw InputError("cannot read feature weights " + path.string());
    }
    if (all.size() != 2 * weights.size()) throw InputError("feature weights: expected 5 stages in " + path.string());
    torch::NoGradGuard ng;
    for (size_t k = 0; k < weights.size(); ++k) {
        if (all[2 * k].sizes() != weights[k].sizes()) throw InputError("feature weights: stage shape mismatch");
        weights[k].copy_(all[2 * k]);
        biases[k].copy_(all[2 * k + 1]);
    }
}

std::pair<torch::Tensor, torch::Tensor> mean_std(const torch::Tensor& features) {
    TORCH_CHECK(features.dim() >= 2, "mean_std expects [..., C, H, W] or [C, L]");
    auto flat = features.dim() >= 3 ? features.flatten(-2) : features;
    if (flat.size(-1) == 0) throw InputError("mean_std: empty spatial extent");
    auto mean = flat.mean(-1);
    auto var = (flat - mean.unsqueeze(-1)).pow(2).mean(-1);
    return {mean, torch::sqrt(var + 1e-8)};
}

PyramidStatsEncoder::PyramidStatsEncoder(FeatureExtractor extractor) : extractor_(std::move(extractor)) {}

torch::Tensor PyramidStatsEncoder::embed(const torch::Tensor& images) const {
    auto pyr = extractor_->extract(images);
    std::vector<torch::Tensor> parts;
    for (const auto& s : pyr.stages) {
        auto [m, sd] = mean_std(s);
        parts.push_back(m);
        parts.push_back(sd);
    }
    auto e = torch::cat(parts, -1);
    return e / e.norm(2, -1, true).clamp_min(1e-12);
}

} // namespace stylos
