#include "stylos/evaluation.hpp"
#include "stylos/errors.hpp"

#include <cmath>

namespace stylos {

namespace F = torch::nn::functional;

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
    TORCH_CHECK(a.sizes() == b.sizes(), "psnr: shape mismatch");
    const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
    TORCH_CHECK(a.sizes() == b.sizes() && a.dim() == 3, "ssim expects two [H, W, C] images");
    constexpr int64_t k = 11;
    constexpr double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    auto x = a.to(torch::kFloat64).permute({2, 0, 1}).unsqueeze(0);
    auto y = b.to(torch::kFloat64).permute({2, 0, 1}).unsqueeze(0);
    const int64_t ch = x.size(1);
    auto coords = torch::arange(k, torch::kFloat64) - (k - 1) / 2.0;
    auto g = torch::exp(-coords.pow(2) / (2 * sigma * sigma));
    g = g / g.sum();
    auto window = torch::outer(g, g).expand({ch, 1, k, k}).contiguous();
    auto blur = [&](const torch::Tensor& t) { return F::conv2d(t, window, F::Conv2dFuncOptions().groups(ch)); };
    if (x.size(2) < k || x.size(3) < k) {
        // Too small for the window: fall back to global statistics.
        window = torch::full({ch, 1, x.size(2), x.size(3)}, 1.0 / static_cast<double>(x.size(2) * x.size(3)),
                             torch::kFloat64);
    }
    auto mx = blur(x), my = blur(y);
    auto sxx = blur(x * x) - mx * mx;
    auto syy = blur(y * y) - my * my;
    auto sxy = blur(x * y) - mx * my;
    auto map = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    return map.mean().item<double>();
}

torch::Tensor perceptual_distance(const FeatureExtractor& extractor, const torch::Tensor& a, const torch::Tensor& b) {
    TORCH_CHECK(a.sizes() == b.sizes(), "perceptual_distance: shape mismatch");
    auto pa = extractor->extract(a.permute({2, 0, 1}).unsqueeze(0));
    auto pb = extractor->extract(b.permute({2, 0, 1}).unsqueeze(0));
    torch::Tensor total;
    for (size_t k = 0; k < pa.size(); ++k) {
        auto na = pa[k] / (pa[k].pow(2).sum(1, true).sqrt() + 1e-10);
        auto nb = pb[k] / (pb[k].pow(2).sum(1, true).sqrt() + 1e-10);
        auto d = (na - nb).pow(2).sum(1).mean();
        total = total.defined() ? total + d : d;
    }
    return total / static_cast<double>(pa.size());
}

WarpResult warp_to_view(const torch::Tensor& source_image, const torch::Tensor& source_depth,
                        const CameraParams& source_cam, const torch::Tensor& target_depth,
                        const CameraParams& target_cam, double tolerance) {
    const int64_t h = target_depth.size(0), w = target_depth.size(1);
    auto td = target_depth.to(torch::kFloat64);
    auto world = unproject_depth(td, target_cam);
    auto [uv, z] = project_points(world, source_cam, h, w);
    auto u = uv.select(-1, 0), v = uv.select(-1, 1);
    auto inside = (u >= 0) & (u < static_cast<double>(w)) & (v >= 0) & (v < static_cast<double>(h)) & (z > 0) &
                  torch::isfinite(td) & (td > 0);

    // Normalized coordinates for grid_sample with align_corners = false.
    auto grid = torch::stack({2.0 * u / static_cast<double>(w) - 1.0, 2.0 * v / static_cast<double>(h) - 1.0}, -1)
                    .unsqueeze(0);
    auto src = source_image.to(torch::kFloat64).permute({2, 0, 1}).unsqueeze(0);
    auto sampled = F::grid_sample(src, grid, F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kBorder).align_corners(false));
    auto sd = source_depth.to(torch::kFloat64).unsqueeze(0).unsqueeze(0);
    auto sdepth = F::grid_sample(sd, grid, F::GridSampleFuncOptions().mode(torch::kNearest).padding_mode(torch::kBorder).align_corners(false))
                      .squeeze(0)
                      .squeeze(0);
    auto visible = (sdepth - z).abs() <= tolerance * z;
    WarpResult out;
    out.mask = inside & visible;
    out.image = sampled.squeeze(0).permute({1, 2, 0}).to(source_image.scalar_type());
    return out;
}

ConsistencyScore consistency(const FeatureExtractor& extractor, const torch::Tensor& renders,
                             const torch::Tensor& depths, const std::vector<CameraParams>& cams, int64_t delta) {
    const int64_t n = renders.size(0);
    if (delta < 1 || n < delta + 1) throw InputError("consistency needs at least delta + 1 views");
    if (static_cast<int64_t>(cams.size()) != n || depths.size(0) != n) throw InputError("consistency: view count mismatch");
    torch::NoGradGuard ng;
    ConsistencyScore score;
    for (int64_t t = delta; t < n; ++t) {
        const int64_t s = t - delta;
        auto warp = warp_to_view(renders[s], depths[s], cams[static_cast<size_t>(s)], depths[t],
                                 cams[static_cast<size_t>(t)]);
        const auto count = warp.mask.sum().item<int64_t>();
        if (count == 0) continue;
        auto m = warp.mask.unsqueeze(-1).to(torch::kFloat64);
        auto target = renders[t].to(torch::kFloat64);
        auto warped = warp.image.to(torch::kFloat64);
        const double mse = ((warped - target).pow(2) * m).sum().item<double>() / (3.0 * static_cast<double>(count));
        score.rmse += std::sqrt(mse);
        score.perceptual +=
            perceptual_distance(extractor, (warped * m).to(torch::kFloat32), (target * m).to(torch::kFloat32))
                .item<double>();
        ++score.pairs;
    }
    if (score.pairs == 0) throw GeometryError("consistency: no overlapping pixels in any pair (disjoint views)");
    score.rmse /= static_cast<double>(score.pairs);
    score.perceptual /= static_cast<double>(score.pairs);
    return score;
}

double median_relative_depth_error(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& mask) {
    std::vector<torch::Tensor> errs;
    for (int64_t v = 0; v < pred.size(0); ++v) {
        auto m = mask[v].to(torch::kBool) & (gt[v] > 0) & torch::isfinite(pred[v]);
        auto p = pred[v].to(torch::kFloat64).masked_select(m);
        auto g = gt[v].to(torch::kFloat64).masked_select(m);
        if (p.numel() == 0) continue;
        auto s = g.median() / p.median();
        errs.push_back(((s * p - g).abs() / g));
    }
    if (errs.empty()) throw GeometryError("depth error: no valid pixels");
    return torch::cat(errs).median().item<double>();
}

} // namespace stylos
