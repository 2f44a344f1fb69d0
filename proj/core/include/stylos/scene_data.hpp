#pragma once

#include "stylos/camera.hpp"

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stylos {

struct View {
    torch::Tensor image;                 // [H, W, 3] float32 in [0, 1]
    std::optional<torch::Tensor> depth_gt; // [H, W] z-depth, > 0 where valid
    std::optional<CameraParams> pose_gt;
    torch::Tensor valid_mask;            // [H, W] bool
};

struct SceneBatch {
    std::vector<View> views;
    torch::Tensor style; // [H, W, 3]
    std::string scene_id;

    int64_t num_views() const { return static_cast<int64_t>(views.size()); }
    int64_t height() const { return views.front().image.size(0); }
    int64_t width() const { return views.front().image.size(1); }
    bool has_geometry() const;

    /// Content images stacked as [N, 3, H, W].
    torch::Tensor images_nchw() const;
    /// Style image as [3, H, W].
    torch::Tensor style_chw() const;
    std::vector<CameraParams> poses() const;
    torch::Tensor depths() const; // [N, H, W]
    torch::Tensor masks() const;  // [N, H, W]

    SceneBatch subset(const std::vector<int64_t>& indices) const;
    /// Throws InputError when the batch breaks its shape or range invariants.
    void validate() const;
};

/// Point every orbit camera looks at (world z is up).
constexpr std::array<double, 3> kOrbitTarget{0.0, 0.0, 0.3};

struct SyntheticSceneOptions {
    double orbit_radius = 4.0;
    double elevation_deg = 25.0;
    double azimuth_step_deg = 10.0;
    double fov_deg = 60.0;
    int64_t patch_size = 16;
};

/// Orbit camera i sits at azimuth i * azimuth_step, looking at the scene center.
std::vector<CameraParams> orbit_cameras(int64_t n_views, const SyntheticSceneOptions& options);

/// Ray-cast scene of shaded boxes and spheres on a checkered ground plane
/// inside a backdrop dome, with exact depth and pose per view. Deterministic
/// in the seed.
SceneBatch generate_synthetic_scene(uint64_t seed, int64_t n_views, int64_t resolution,
                                    const SyntheticSceneOptions& options = {});

/// Procedural "painting" used as a style reference in tests and demos.
torch::Tensor synthetic_style_image(uint64_t seed, int64_t resolution);

/// Reads every PNG/JPEG directly inside `folder` in filename order.
SceneBatch load_image_folder(const std::filesystem::path& folder,
                             const std::filesystem::path& style_path, int64_t resolution);

/// Scene folder layout: frame_%04d.png, frame_%04d.depth (see write_depth),
/// cameras.json and styles/style.png.
void save_scene_folder(const SceneBatch& scene, const std::filesystem::path& folder);
/// Loads a folder written by save_scene_folder; depth/poses are attached when present.
SceneBatch load_scene_folder(const std::filesystem::path& folder,
                             const std::optional<std::filesystem::path>& style_path = std::nullopt);

struct ColorJitterRanges {
    double brightness = 0.4;
    double contrast = 0.4;
    double saturation = 0.4;
    double hue = 0.1; // fraction of the hue circle
};

torch::Tensor color_jitter(const torch::Tensor& image, uint64_t seed,
                           const ColorJitterRanges& ranges = {});

} // namespace stylos
