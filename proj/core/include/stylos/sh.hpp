#pragma once

#include <torch/torch.h>

namespace stylos {

constexpr double kShC0 = 0.28209479177387814;
constexpr double kShC1 = 0.4886025119029199;
constexpr int64_t kMaxShDegree = 1;

/// Real SH basis up to `degree` evaluated at unit directions [M, 3] -> [M, (degree+1)^2].
/// Ordering follows the 3DGS convention: Y00, then (-C1 y, C1 z, -C1 x).
torch::Tensor sh_basis(int64_t degree, const torch::Tensor& dirs);

/// coeffs [M, 3, (degree+1)^2], dirs [M, 3] -> colors [M, 3] =
/// clamp(sum_b coeffs * Y_b + 0.5, 0, 1).
torch::Tensor eval_sh(int64_t degree, const torch::Tensor& coeffs, const torch::Tensor& dirs);

} // namespace stylos
