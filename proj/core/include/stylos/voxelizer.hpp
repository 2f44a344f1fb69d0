#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <utility>

namespace stylos {

/// Per-pixel world points with confidence and validity, [S, H, W(, 3)].
struct PointMap {
    torch::Tensor points;     // [S, H, W, 3]
    torch::Tensor confidence; // [S, H, W], >= 0
    torch::Tensor valid;      // [S, H, W], bool

    int64_t views() const { return points.size(0); }
    int64_t height() const { return points.size(1); }
    int64_t width() const { return points.size(2); }
    PointMap select_views(int64_t begin, int64_t end) const;
    PointMap index_views(const torch::Tensor& order) const;
    PointMap detach() const;
};

/// Axis-aligned grid of cubic voxels. With auto_fit, origin/voxel_size/dims
/// are derived from the valid points (bounding box plus margin on each side,
/// longest side split into `resolution` voxels).
struct GridSpec {
    int64_t resolution = 32;
    bool auto_fit = true;
    double margin = 0.05;
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    double voxel_size = 0.0;
    std::array<int64_t, 3> dims{32, 32, 32};
};

struct VoxelGrid {
    torch::Tensor features; // [X, Y, Z, C], zero where unoccupied
    torch::Tensor mass;     // [X, Y, Z], accumulated confidence
    std::array<double, 3> origin{};
    double voxel_size = 0.0;

    torch::Tensor occupied() const { return mass > 0; }
    int64_t channels() const { return features.size(-1); }
};

/// Area-averages points and confidence down to (height, width); an output
/// pixel is valid only if every source pixel it covers is valid.
PointMap resize_to_level(const PointMap& pointmap, int64_t height, int64_t width);

/// Resolves an auto-fit GridSpec against the valid points. Throws
/// GeometryError when there are no valid points.
GridSpec fit_grid(const PointMap& pointmap, const GridSpec& spec);

/// Divides all points by the median distance between valid points and their
/// view's camera center ([S, 3]).
PointMap normalize_scene_scale(const PointMap& pointmap, const torch::Tensor& camera_centers);

/// Scatter-adds confidence-weighted features [S, C, H, W] into the voxel that
/// contains each valid point; features are normalized by mass on read-out.
/// Differentiable in `features` only. Binning is floor((p - origin) / size);
/// points on the upper boundary go to the last bin, points outside the grid
/// are ignored.
VoxelGrid voxelize(const torch::Tensor& features, const PointMap& pointmap, const GridSpec& spec);

/// Per-channel mean and population std (eps 1e-8 under the root) over
/// occupied voxels. Throws GeometryError if nothing is occupied.
std::pair<torch::Tensor, torch::Tensor> voxel_stats(const VoxelGrid& grid);

/// Debug dump of occupied voxels: "SVOX" | u64 count | float32 centers[count*3] | float32 mass[count].
void export_occupancy(const VoxelGrid& grid, const std::filesystem::path& path);

} // namespace stylos
