#include "stylos/renderer.hpp"
#include "stylos/rasterizer.hpp"
#include "stylos/sh.hpp"

namespace stylos {

torch::Tensor covariance_3d(const torch::Tensor& rotations, const torch::Tensor& scales) {
    auto r = quaternion_to_matrix(rotations);
    auto rs = r * scales.unsqueeze(-2); // columns scaled
    return torch::matmul(rs, rs.transpose(-1, -2));
}

ProjectedGaussians project_gaussians(const GaussianSet& g, const CameraTensors& cam, int64_t height, int64_t width,
                                     double near_plane) {
    auto rot = quaternion_to_matrix(cam.rotation.reshape({4}).to(g.means.scalar_type()));
    auto center = cam.translation.reshape({1, 3}).to(g.means.scalar_type());
    auto fov = cam.fov.reshape({2}).to(g.means.scalar_type());

    auto pc_all = torch::matmul(g.means - center, rot); // camera frame, row vectors
    auto idx = (pc_all.select(1, 2).detach() > near_plane).nonzero().squeeze(1);
    auto pc = pc_all.index_select(0, idx);
    auto x = pc.select(1, 0), y = pc.select(1, 1), z = pc.select(1, 2);

    auto fx = 0.5 * static_cast<double>(width) / torch::tan(0.5 * fov[0]);
    auto fy = 0.5 * static_cast<double>(height) / torch::tan(0.5 * fov[1]);
    auto u = fx * x / z + 0.5 * static_cast<double>(width);
    auto v = fy * y / z + 0.5 * static_cast<double>(height);

    auto zero = torch::zeros_like(z);
    auto j_row0 = torch::stack({fx / z, zero, -fx * x / (z * z)}, -1);
    auto j_row1 = torch::stack({zero, fy / z, -fy * y / (z * z)}, -1);
    auto jac = torch::stack({j_row0, j_row1}, 1);                     // [M', 2, 3]
    auto t = torch::matmul(jac, rot.transpose(0, 1).unsqueeze(0));    // world -> image plane
    auto cov3 = covariance_3d(g.rotations.index_select(0, idx), g.scales.index_select(0, idx));
    auto cov2 = torch::matmul(torch::matmul(t, cov3), t.transpose(1, 2));

    return {idx, torch::stack({u, v}, -1), cov2, z};
}

RenderOutput render(const GaussianSet& g, const CameraTensors& cam, int64_t height, int64_t width,
                    const RenderSettings& settings) {
    const auto dtype = g.means.defined() ? g.means.scalar_type() : torch::kFloat32;
    auto bg = torch::tensor({settings.background[0], settings.background[1], settings.background[2]},
                            torch::TensorOptions().dtype(dtype));
    if (g.size() == 0) {
        return {bg.view({1, 1, 3}).expand({height, width, 3}).clone(), torch::zeros({height, width}, bg.options()),
                torch::zeros({height, width}, bg.options())};
    }
    auto proj = project_gaussians(g, cam, height, width, settings.near_plane);

    if (proj.indices.numel() == 0) {
        auto opts = g.means.options();
        return {bg.view({1, 1, 3}).expand({height, width, 3}).clone(), torch::zeros({height, width}, opts),
                torch::zeros({height, width}, opts)};
    }

    auto cov = proj.cov2d;
    auto sxx = cov.select(1, 0).select(1, 0) + settings.dilation;
    auto syy = cov.select(1, 1).select(1, 1) + settings.dilation;
    auto sxy = cov.select(1, 0).select(1, 1);
    auto det = sxx * syy - sxy * sxy;
    auto conics = torch::stack({syy / det, -sxy / det, sxx / det}, -1);

    auto means = g.means.index_select(0, proj.indices);
    auto center = cam.translation.reshape({1, 3}).to(dtype);
    auto dirs = means - center;
    dirs = dirs / dirs.norm(2, -1, true).clamp_min(1e-12);
    auto colors = eval_sh(g.sh_degree, g.sh.index_select(0, proj.indices), dirs);
    auto feats = torch::cat({colors, proj.depths.unsqueeze(1)}, 1);

    RasterSettings rs;
    rs.height = height;
    rs.width = width;
    rs.max_alpha = settings.max_alpha;
    rs.min_transmittance = settings.min_transmittance;
    rs.cutoff = settings.cutoff;
    auto [accum, alpha] = rasterize(proj.means2d, conics, g.opacities.index_select(0, proj.indices), feats,
                                    proj.depths.detach(), rs);

    RenderOutput out;
    out.alpha = alpha;
    out.image = accum.slice(-1, 0, 3) + (1.0 - alpha).unsqueeze(-1) * bg;
    out.depth = accum.select(-1, 3) / alpha.clamp_min(1e-8);
    return out;
}

RenderOutput render(const GaussianSet& g, const CameraParams& cam, int64_t height, int64_t width,
                    const RenderSettings& settings) {
    return render(g, CameraTensors::from_params({cam}, g.means.scalar_type()), height, width, settings);
}

} // namespace stylos
