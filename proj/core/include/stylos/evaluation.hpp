#pragma once

#include "stylos/camera.hpp"
#include "stylos/feature_extractor.hpp"

#include <torch/torch.h>

#include <vector>

namespace stylos {

constexpr double kPsnrCap = 99.0;

/// Images [H, W, 3] (or any equal shapes) in [0, 1]. Identical inputs give kPsnrCap.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), computed per
/// channel over valid window positions. Images [H, W, 3].
double ssim(const torch::Tensor& a, const torch::Tensor& b);

/// Stage-averaged squared difference of channel-normalized pyramid features.
/// Images [H, W, 3]. Differentiable when called on tensors requiring grad.
torch::Tensor perceptual_distance(const FeatureExtractor& extractor, const torch::Tensor& a, const torch::Tensor& b);

/// Pulls `source` into the target view: each target pixel is lifted with the
/// target depth and projected into the source camera. A pixel is in the
/// overlap if it lands inside the source image and the source depth there
/// agrees with the projected depth within `tolerance` (relative).
struct WarpResult {
    torch::Tensor image; // [H, W, 3]
    torch::Tensor mask;  // [H, W] bool
};
WarpResult warp_to_view(const torch::Tensor& source_image, const torch::Tensor& source_depth,
                        const CameraParams& source_cam, const torch::Tensor& target_depth,
                        const CameraParams& target_cam, double tolerance = 0.01);

struct ConsistencyScore {
    double perceptual = 0.0;
    double rmse = 0.0;
    int64_t pairs = 0;
};

/// Averages over t = delta .. N-1 of the warp of frame t - delta into frame t.
/// renders [N, H, W, 3], depths [N, H, W]. Pairs with an empty overlap are
/// skipped; GeometryError if every pair is empty.
ConsistencyScore consistency(const FeatureExtractor& extractor, const torch::Tensor& renders,
                             const torch::Tensor& depths, const std::vector<CameraParams>& cams, int64_t delta);

/// Median over valid pixels of |s * pred - gt| / gt, where s aligns the
/// medians of pred and gt per view. pred/gt/mask [V, H, W].
double median_relative_depth_error(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& mask);

} // namespace stylos
