#pragma once

#include <torch/torch.h>

namespace stylos {

struct RasterSettings {
    int64_t height = 0;
    int64_t width = 0;
    double max_alpha = 0.99;
    double min_transmittance = 1e-4;
    /// Squared Mahalanobis cutoff; 9 truncates at 3 sigma.
    double cutoff = 9.0;
};

/// Front-to-back alpha compositing of 2D Gaussians, differentiable in every
/// input except `depths` (used for ordering only).
///
///   means2d [M, 2] pixel coordinates, conics [M, 3] (a, b, c) of the inverse
///   covariance, opacities [M], features [M, F], depths [M].
///
/// Returns {accum [H, W, F], alpha [H, W]} where accum is the weighted sum of
/// features and alpha = 1 - final transmittance. Float and double supported.
std::pair<torch::Tensor, torch::Tensor> rasterize(const torch::Tensor& means2d, const torch::Tensor& conics,
                                                  const torch::Tensor& opacities, const torch::Tensor& features,
                                                  const torch::Tensor& depths, const RasterSettings& settings);

} // namespace stylos
