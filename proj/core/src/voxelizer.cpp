#include "stylos/voxelizer.hpp"
#include "stylos/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace stylos {

namespace F = torch::nn::functional;

PointMap PointMap::select_views(int64_t begin, int64_t end) const {
    return {points.slice(0, begin, end), confidence.slice(0, begin, end), valid.slice(0, begin, end)};
}

PointMap PointMap::index_views(const torch::Tensor& order) const {
    return {points.index_select(0, order), confidence.index_select(0, order), valid.index_select(0, order)};
}

PointMap PointMap::detach() const { return {points.detach(), confidence.detach(), valid}; }

PointMap resize_to_level(const PointMap& pm, int64_t height, int64_t width) {
    if (height == pm.height() && width == pm.width()) return pm;
    if (height > pm.height() || width > pm.width()) {
        throw ConfigError("resize_to_level only downsamples");
    }
    auto valid_f = pm.valid.to(pm.points.scalar_type());
    auto pts = torch::where(pm.valid.unsqueeze(-1), pm.points, torch::zeros_like(pm.points));
    auto size = std::vector<int64_t>{height, width};
    auto pooled_pts = F::adaptive_avg_pool2d(pts.permute({0, 3, 1, 2}), F::AdaptiveAvgPool2dFuncOptions(size))
                          .permute({0, 2, 3, 1});
    auto conf = torch::where(pm.valid, pm.confidence, torch::zeros_like(pm.confidence));
    auto pooled_conf = F::adaptive_avg_pool2d(conf.unsqueeze(1), F::AdaptiveAvgPool2dFuncOptions(size)).squeeze(1);
    auto pooled_valid = F::adaptive_avg_pool2d(valid_f.unsqueeze(1), F::AdaptiveAvgPool2dFuncOptions(size)).squeeze(1);
    return {pooled_pts.contiguous(), pooled_conf, pooled_valid > 1.0 - 1e-6};
}

namespace {

torch::Tensor valid_points(const PointMap& pm) {
    auto mask = pm.valid & torch::isfinite(pm.points).all(-1);
    return pm.points.detach().reshape({-1, 3}).index_select(0, mask.reshape({-1}).nonzero().squeeze(1));
}

} // namespace

GridSpec fit_grid(const PointMap& pm, const GridSpec& spec) {
    if (!spec.auto_fit) {
        if (spec.voxel_size <= 0) throw ConfigError("explicit grid needs a positive voxel size");
        return spec;
    }
    auto pts = valid_points(pm).to(torch::kFloat64);
    if (pts.size(0) == 0) throw GeometryError("voxelize: no valid points (degenerate geometry)");
    auto lo = std::get<0>(pts.min(0));
    auto hi = std::get<0>(pts.max(0));
    GridSpec out = spec;
    std::array<double, 3> extent{};
    double longest = 0.0;
    for (int64_t a = 0; a < 3; ++a) {
        const auto ai = static_cast<size_t>(a);
        extent[ai] = (hi[a].item<double>() - lo[a].item<double>()) * (1.0 + 2.0 * spec.margin);
        out.origin[ai] = lo[a].item<double>() - spec.margin * (hi[a].item<double>() - lo[a].item<double>());
        longest = std::max(longest, extent[ai]);
    }
    if (longest <= 0.0) longest = 1e-6;
    out.voxel_size = longest / static_cast<double>(spec.resolution);
    for (size_t a = 0; a < 3; ++a) {
        out.dims[a] = std::clamp<int64_t>(static_cast<int64_t>(std::ceil(extent[a] / out.voxel_size - 1e-9)), 1,
                                          spec.resolution);
    }
    out.auto_fit = false;
    return out;
}

PointMap normalize_scene_scale(const PointMap& pm, const torch::Tensor& camera_centers) {
    auto centers = camera_centers.to(pm.points.scalar_type()).view({-1, 1, 1, 3});
    auto dist = (pm.points.detach() - centers).norm(2, -1);
    auto mask = pm.valid & torch::isfinite(dist);
    auto d = dist.masked_select(mask);
    if (d.numel() == 0) throw GeometryError("normalize_scene_scale: no valid points");
    const double median = d.median().item<double>();
    if (!(median > 0)) throw GeometryError("normalize_scene_scale: zero scene scale");
    return {pm.points / median, pm.confidence, pm.valid};
}

VoxelGrid voxelize(const torch::Tensor& features, const PointMap& pm, const GridSpec& spec) {
    TORCH_CHECK(features.dim() == 4, "voxelize expects features [S, C, H, W]");
    const int64_t s = features.size(0), c = features.size(1), h = features.size(2), w = features.size(3);
    if (pm.views() != s || pm.height() != h || pm.width() != w) {
        throw ConfigError("voxelize: point map shape does not match the feature map");
    }
    const GridSpec grid = fit_grid(pm, spec);
    const auto [dx, dy, dz] = grid.dims;

    auto opts_long = torch::TensorOptions().dtype(torch::kLong);
    auto pts = pm.points.detach().to(torch::kFloat64).reshape({-1, 3});
    auto origin = torch::tensor({grid.origin[0], grid.origin[1], grid.origin[2]}, torch::kFloat64);
    auto cell = torch::floor((pts - origin) / grid.voxel_size).nan_to_num(-1.0).to(opts_long);
    auto upper = torch::tensor({dx, dy, dz}, opts_long);
    // Points exactly on the upper boundary land in the last bin.
    auto on_edge = (cell == upper) & ((pts - origin) <= (upper.to(torch::kFloat64) * grid.voxel_size + 1e-9));
    cell = torch::where(on_edge, upper - 1, cell);
    auto inside = ((cell >= 0) & (cell < upper)).all(-1);

    auto mask = (pm.valid.reshape({-1}) & inside & torch::isfinite(pts).all(-1));
    auto sel = mask.nonzero().squeeze(1);
    if (sel.numel() == 0) throw GeometryError("voxelize: no valid points (degenerate geometry)");

    auto lin = (cell.select(1, 0) * dy + cell.select(1, 1)) * dz + cell.select(1, 2);
    lin = lin.index_select(0, sel);
    auto feats = features.permute({0, 2, 3, 1}).reshape({-1, c}).index_select(0, sel);
    auto weights = pm.confidence.detach().to(features.scalar_type()).reshape({-1}).index_select(0, sel);

    const int64_t nvox = dx * dy * dz;
    auto weighted = torch::zeros({nvox, c}, features.options()).index_add(0, lin, feats * weights.unsqueeze(1));
    auto mass = torch::zeros({nvox}, weights.options()).index_add(0, lin, weights);
    auto denom = torch::where(mass > 0, mass, torch::ones_like(mass));

    VoxelGrid out;
    out.features = (weighted / denom.unsqueeze(1)).view({dx, dy, dz, c});
    out.mass = mass.view({dx, dy, dz});
    out.origin = grid.origin;
    out.voxel_size = grid.voxel_size;
    return out;
}

std::pair<torch::Tensor, torch::Tensor> voxel_stats(const VoxelGrid& grid) {
    const int64_t c = grid.channels();
    auto occ = (grid.mass.reshape({-1}) > 0).nonzero().squeeze(1);
    if (occ.numel() == 0) throw GeometryError("voxel_stats: no occupied voxels");
    auto feats = grid.features.reshape({-1, c}).index_select(0, occ);
    auto mean = feats.mean(0);
    auto var = (feats - mean).pow(2).mean(0);
    return {mean, torch::sqrt(var + 1e-8)};
}

void export_occupancy(const VoxelGrid& grid, const std::filesystem::path& path) {
    auto mass = grid.mass.detach().to(torch::kFloat64);
    auto idx = (mass > 0).nonzero(); // [U, 3]
    const auto count = static_cast<uint64_t>(idx.size(0));
    auto origin = torch::tensor({grid.origin[0], grid.origin[1], grid.origin[2]}, torch::kFloat64);
    auto centers = (origin + (idx.to(torch::kFloat64) + 0.5) * grid.voxel_size).to(torch::kFloat32).contiguous();
    auto m = mass.index({idx.select(1, 0), idx.select(1, 1), idx.select(1, 2)}).to(torch::kFloat32).contiguous();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.write("SVOX", 4);
    out.write(reinterpret_cast<const char*>(&count), 8);
    out.write(reinterpret_cast<const char*>(centers.data_ptr<float>()), static_cast<std::streamsize>(count * 12));
    out.write(reinterpret_cast<const char*>(m.data_ptr<float>()), static_cast<std::streamsize>(count * 4));
}

} // namespace stylos
