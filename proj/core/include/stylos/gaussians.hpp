#pragma once

#include "stylos/camera.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace stylos {

/// M anisotropic Gaussians. Tensors share one dtype; sh is [M, 3, (k+1)^2].
struct GaussianSet {
    torch::Tensor means;       // [M, 3]
    torch::Tensor opacities;   // [M], (0, 1)
    torch::Tensor rotations;   // [M, 4], unit (w, x, y, z)
    torch::Tensor scales;      // [M, 3], > 0
    torch::Tensor sh;          // [M, 3, (k+1)^2]
    torch::Tensor confidences; // [M], >= 0
    int64_t sh_degree = 0;

    int64_t size() const { return means.defined() ? means.size(0) : 0; }
    GaussianSet index_select(const torch::Tensor& indices) const;
    GaussianSet detach() const;
    static GaussianSet concat(const std::vector<GaussianSet>& sets);
    /// Throws InvariantError on non-finite values, non-unit quaternions,
    /// non-positive scales or opacities outside (0, 1).
    void validate() const;
};

struct AdapterOptions {
    /// Voxel edge for confidence-weighted fusion; 0 disables merging and
    /// position offsets.
    double voxel_size = 0.005;
};

/// Lifts per-pixel predictions into Gaussians: each valid pixel is unprojected
/// to an anchor, moved by a bounded offset (tanh * voxel_size), and given
/// softplus scales (in units of the pixel footprint depth / f), sigmoid
/// opacity and a normalized quaternion. Pixels with non-finite or
/// non-positive depth are dropped. The result is passed through voxel_merge.
///
/// geom [V, H, W, 11], sh [V, H, W, 3, nb], depth/confidence [V, H, W], cams with V entries.
GaussianSet gaussian_adapter(const torch::Tensor& geom, const torch::Tensor& sh, const torch::Tensor& depth,
                             const torch::Tensor& confidence, const CameraTensors& cams,
                             const AdapterOptions& options, const torch::Tensor& valid = {});

/// Fuses Gaussians sharing a voxel: positions, scales, SH and opacities are
/// confidence-weighted means, quaternions the weighted chordal mean
/// (hemisphere-aligned sum, renormalized), confidence the sum.
/// voxel_size == 0 returns the input unchanged.
GaussianSet voxel_merge(const GaussianSet& gaussians, double voxel_size);

/// Columnar export, little-endian:
///   "SGSP" | u32 version (1) | u32 sh_degree | u32 bands | u64 count
///   then float32 columns: means[M*3], opacities[M], rotations[M*4],
///   scales[M*3], sh[M*3*bands], confidences[M].
/// A JSON sidecar (`<path>.json`) records k, voxel_size and column offsets.
void export_gaussians(const GaussianSet& gaussians, const std::filesystem::path& path, double voxel_size);
GaussianSet import_gaussians(const std::filesystem::path& path);

} // namespace stylos
