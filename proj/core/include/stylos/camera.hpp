#pragma once

#include <torch/torch.h>

#include <array>
#include <vector>

namespace stylos {

/// Camera-to-world pose plus field of view. The 9 numbers are
/// quaternion (w, x, y, z), camera center in world units, and (fov_x, fov_y)
/// in radians. Camera axes follow the OpenCV convention: x right, y down,
/// z forward.
struct CameraParams {
    std::array<double, 4> rotation{1.0, 0.0, 0.0, 0.0};
    std::array<double, 3> translation{0.0, 0.0, 0.0};
    std::array<double, 2> fov{1.0471975511965976, 1.0471975511965976};

    std::array<double, 9> to_vector() const;
    static CameraParams from_vector(const std::array<double, 9>& v);
    /// Throws ConfigError if the quaternion is not unit-norm or a fov is outside (0, pi).
    void validate() const;
};

struct Intrinsics {
    double fx, fy, cx, cy;
};

/// Principal point at the image center; pixel (row i, col j) has its center at (j + 0.5, i + 0.5).
Intrinsics intrinsics_from_fov(const std::array<double, 2>& fov, int64_t height, int64_t width);

/// 3x3 rotation matrix of a (w, x, y, z) quaternion, row-major.
std::array<double, 9> quaternion_to_matrix(const std::array<double, 4>& q);
std::array<double, 4> matrix_to_quaternion(const std::array<double, 9>& m);

/// Differentiable versions over tensors: quaternions [..., 4] -> rotations [..., 3, 3].
torch::Tensor quaternion_to_matrix(const torch::Tensor& q);

/// Camera parameters as differentiable tensors, used inside the model where
/// cameras are predicted rather than given.
struct CameraTensors {
    torch::Tensor rotation;    // [V, 4] unit quaternion, camera-to-world
    torch::Tensor translation; // [V, 3] camera center
    torch::Tensor fov;         // [V, 2]

    int64_t size() const { return rotation.size(0); }
    CameraTensors index(int64_t v) const;
    CameraTensors detach() const;
    std::vector<CameraParams> to_params() const;
    static CameraTensors from_params(const std::vector<CameraParams>& cams,
                                     torch::Dtype dtype = torch::kFloat32);
};

/// Back-projects a depth map [H, W] (z-depth) to world points [H, W, 3].
torch::Tensor unproject_depth(const torch::Tensor& depth, const CameraParams& cam);

/// Same, with cameras as tensors ([4], [3], [2]) so gradients can reach depth and camera.
torch::Tensor unproject_depth(const torch::Tensor& depth, const torch::Tensor& rotation,
                              const torch::Tensor& translation, const torch::Tensor& fov);

/// Projects world points [..., 3] into pixel coordinates [..., 2] and returns z-depth [...] too.
std::pair<torch::Tensor, torch::Tensor> project_points(const torch::Tensor& points,
                                                       const CameraParams& cam,
                                                       int64_t height, int64_t width);

} // namespace stylos
