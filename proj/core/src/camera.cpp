#include "stylos/camera.hpp"
#include "stylos/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace stylos {

std::array<double, 9> CameraParams::to_vector() const {
    return {rotation[0], rotation[1], rotation[2], rotation[3],
            translation[0], translation[1], translation[2], fov[0], fov[1]};
}

CameraParams CameraParams::from_vector(const std::array<double, 9>& v) {
    CameraParams c;
    c.rotation = {v[0], v[1], v[2], v[3]};
    c.translation = {v[4], v[5], v[6]};
    c.fov = {v[7], v[8]};
    return c;
}

void CameraParams::validate() const {
    const double n = std::sqrt(rotation[0] * rotation[0] + rotation[1] * rotation[1] +
                               rotation[2] * rotation[2] + rotation[3] * rotation[3]);
    if (std::abs(n - 1.0) > 1e-6) {
        throw ConfigError("camera quaternion is not unit-norm (|q| = " + std::to_string(n) + ")");
    }
    for (double f : fov) {
        if (!(f > 0.0 && f < std::numbers::pi)) {
            throw ConfigError("camera fov outside (0, pi): " + std::to_string(f));
        }
    }
}

Intrinsics intrinsics_from_fov(const std::array<double, 2>& fov, int64_t height, int64_t width) {
    Intrinsics k{};
    k.fx = 0.5 * static_cast<double>(width) / std::tan(0.5 * fov[0]);
    k.fy = 0.5 * static_cast<double>(height) / std::tan(0.5 * fov[1]);
    k.cx = 0.5 * static_cast<double>(width);
    k.cy = 0.5 * static_cast<double>(height);
    return k;
}

std::array<double, 9> quaternion_to_matrix(const std::array<double, 4>& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
            2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

std::array<double, 4> matrix_to_quaternion(const std::array<double, 9>& m) {
    // Shepperd's method, picking the largest diagonal term for stability.
    const double trace = m[0] + m[4] + m[8];
    std::array<double, 4> q{};
    if (trace > 0) {
        const double s = 0.5 / std::sqrt(trace + 1.0);
        q = {0.25 / s, (m[7] - m[5]) * s, (m[2] - m[6]) * s, (m[3] - m[1]) * s};
    } else if (m[0] > m[4] && m[0] > m[8]) {
        const double s = 2.0 * std::sqrt(1.0 + m[0] - m[4] - m[8]);
        q = {(m[7] - m[5]) / s, 0.25 * s, (m[1] + m[3]) / s, (m[2] + m[6]) / s};
    } else if (m[4] > m[8]) {
        const double s = 2.0 * std::sqrt(1.0 + m[4] - m[0] - m[8]);
        q = {(m[2] - m[6]) / s, (m[1] + m[3]) / s, 0.25 * s, (m[5] + m[7]) / s};
    } else {
        const double s = 2.0 * std::sqrt(1.0 + m[8] - m[0] - m[4]);
        q = {(m[3] - m[1]) / s, (m[2] + m[6]) / s, (m[5] + m[7]) / s, 0.25 * s};
    }
    if (q[0] < 0) {
        for (auto& v : q) v = -v;
    }
    const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (auto& v : q) v /= n;
    return q;
}

torch::Tensor quaternion_to_matrix(const torch::Tensor& q) {
    auto w = q.select(-1, 0), x = q.select(-1, 1), y = q.select(-1, 2), z = q.select(-1, 3);
    auto r = torch::stack({1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                           2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                           2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)},
                          -1);
    auto shape = q.sizes().vec();
    shape.back() = 3;
    shape.push_back(3);
    return r.reshape(shape);
}

CameraTensors CameraTensors::index(int64_t v) const {
    return {rotation.slice(0, v, v + 1), translation.slice(0, v, v + 1), fov.slice(0, v, v + 1)};
}

CameraTensors CameraTensors::detach() const {
    return {rotation.detach(), translation.detach(), fov.detach()};
}

std::vector<CameraParams> CameraTensors::to_params() const {
    auto r = rotation.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    auto t = translation.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    auto f = fov.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    std::vector<CameraParams> out(static_cast<size_t>(size()));
    auto ra = r.accessor<double, 2>();
    auto ta = t.accessor<double, 2>();
    auto fa = f.accessor<double, 2>();
    for (int64_t v = 0; v < size(); ++v) {
        auto& c = out[static_cast<size_t>(v)];
        c.rotation = {ra[v][0], ra[v][1], ra[v][2], ra[v][3]};
        c.translation = {ta[v][0], ta[v][1], ta[v][2]};
        c.fov = {fa[v][0], fa[v][1]};
    }
    return out;
}

CameraTensors CameraTensors::from_params(const std::vector<CameraParams>& cams, torch::Dtype dtype) {
    const auto n = static_cast<int64_t>(cams.size());
    auto r = torch::empty({n, 4}, torch::kFloat64);
    auto t = torch::empty({n, 3}, torch::kFloat64);
    auto f = torch::empty({n, 2}, torch::kFloat64);
    for (int64_t v = 0; v < n; ++v) {
        const auto& c = cams[static_cast<size_t>(v)];
        for (int k = 0; k < 4; ++k) r[v][k] = c.rotation[static_cast<size_t>(k)];
        for (int k = 0; k < 3; ++k) t[v][k] = c.translation[static_cast<size_t>(k)];
        for (int k = 0; k < 2; ++k) f[v][k] = c.fov[static_cast<size_t>(k)];
    }
    return {r.to(dtype), t.to(dtype), f.to(dtype)};
}

namespace {

torch::Tensor pixel_grid(int64_t height, int64_t width, const torch::TensorOptions& opts) {
    auto u = torch::arange(width, opts) + 0.5;
    auto v = torch::arange(height, opts) + 0.5;
    auto grids = torch::meshgrid({v, u}, "ij");
    return torch::stack({grids[1], grids[0]}, -1); // [H, W, 2] as (u, v)
}

} // namespace

torch::Tensor unproject_depth(const torch::Tensor& depth, const torch::Tensor& rotation,
                              const torch::Tensor& translation, const torch::Tensor& fov) {
    TORCH_CHECK(depth.dim() == 2, "unproject_depth expects an [H, W] depth map");
    const int64_t h = depth.size(0), w = depth.size(1);
    auto grid = pixel_grid(h, w, depth.options().requires_grad(false));
    auto fx = 0.5 * static_cast<double>(w) / torch::tan(0.5 * fov.reshape({2})[0]);
    auto fy = 0.5 * static_cast<double>(h) / torch::tan(0.5 * fov.reshape({2})[1]);
    auto x = (grid.select(-1, 0) - 0.5 * static_cast<double>(w)) / fx * depth;
    auto y = (grid.select(-1, 1) - 0.5 * static_cast<double>(h)) / fy * depth;
    auto cam_pts = torch::stack({x, y, depth}, -1);
    auto rot = quaternion_to_matrix(rotation.reshape({4}));
    return torch::matmul(cam_pts, rot.transpose(0, 1)) + translation.reshape({1, 1, 3});
}

torch::Tensor unproject_depth(const torch::Tensor& depth, const CameraParams& cam) {
    auto ct = CameraTensors::from_params({cam}, depth.scalar_type());
    return unproject_depth(depth, ct.rotation[0], ct.translation[0], ct.fov[0]);
}

std::pair<torch::Tensor, torch::Tensor> project_points(const torch::Tensor& points,
                                                       const CameraParams& cam,
                                                       int64_t height, int64_t width) {
    auto ct = CameraTensors::from_params({cam}, points.scalar_type());
    auto rot = quaternion_to_matrix(ct.rotation[0]);
    auto pc = torch::matmul(points - ct.translation[0], rot); // R^T (X - t) in row form
    const auto k = intrinsics_from_fov(cam.fov, height, width);
    auto z = pc.select(-1, 2);
    auto u = k.fx * pc.select(-1, 0) / z + k.cx;
    auto v = k.fy * pc.select(-1, 1) / z + k.cy;
    return {torch::stack({u, v}, -1), z};
}

} // namespace stylos
