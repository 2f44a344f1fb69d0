#pragma once

#include "stylos/camera.hpp"
#include "stylos/gaussians.hpp"

#include <torch/torch.h>

#include <array>

namespace stylos {

struct RenderSettings {
    std::array<double, 3> background{0.5, 0.5, 0.5};
    double near_plane = 0.01;
    /// Added to the projected covariance diagonal (pixels^2) so sub-pixel
    /// Gaussians still cover a pixel center.
    double dilation = 0.3;
    double max_alpha = 0.99;
    double min_transmittance = 1e-4;
    double cutoff = 9.0;
};

struct RenderOutput {
    torch::Tensor image; // [H, W, 3]
    torch::Tensor alpha; // [H, W]
    torch::Tensor depth; // [H, W], expected z-depth under the compositing weights (0 where alpha is 0)
};

/// Projected Gaussians in front of the near plane.
struct ProjectedGaussians {
    torch::Tensor indices; // [M'] into the input set
    torch::Tensor means2d; // [M', 2] pixel coordinates
    torch::Tensor cov2d;   // [M', 2, 2], without dilation
    torch::Tensor depths;  // [M'] camera z
};

/// R diag(s^2) R^T for quaternions [M, 4] and scales [M, 3] -> [M, 3, 3].
torch::Tensor covariance_3d(const torch::Tensor& rotations, const torch::Tensor& scales);

/// Perspective projection of means and first-order (EWA) projection of
/// covariances. `cam` holds one camera ([1, ...] tensors or a single view).
ProjectedGaussians project_gaussians(const GaussianSet& gaussians, const CameraTensors& cam, int64_t height,
                                     int64_t width, double near_plane = 0.01);

/// Renders one view. Differentiable in the Gaussian parameters and the camera.
RenderOutput render(const GaussianSet& gaussians, const CameraTensors& cam, int64_t height, int64_t width,
                    const RenderSettings& settings = {});

RenderOutput render(const GaussianSet& gaussians, const CameraParams& cam, int64_t height, int64_t width,
                    const RenderSettings& settings = {});

} // namespace stylos
