#pragma once

#include "stylos/camera.hpp"
#include "stylos/config.hpp"
#include "stylos/feature_extractor.hpp"
#include "stylos/voxelizer.hpp"

#include <torch/torch.h>

#include <array>
#include <map>
#include <string>

namespace stylos {

struct LossWeights {
    double style = 1.0;
    double content = 0.5;
    double clip = 0.0;
    double tv = 1e-4;
    double mse = 1.0;
    double distill = 1.0;
    std::array<double, 5> stage{1.0, 1.0, 1.0, 1.0, 1.0};

    /// Throws ConfigError on negative or non-finite weights.
    void validate() const;
    /// Keys: loss.style, loss.content, loss.clip, loss.tv, loss.mse,
    /// loss.distill, loss.stage_weights (five comma-separated values).
    static LossWeights from_config(const KeyValueConfig& config);
    void to_config(KeyValueConfig& config) const;
};

struct LossTerm {
    double value = 0.0;  // unweighted
    double weight = 0.0;
    double weighted = 0.0;
};

struct LossReport {
    int64_t step = 0;
    int stage = 1;
    double total = 0.0;
    std::map<std::string, LossTerm> components;
    /// Extra diagnostics that are not part of the total (e.g. distillation parts).
    std::map<std::string, double> extras;

    /// One JSON object on a single line.
    std::string to_json_line() const;
    /// |total - sum of weighted components| <= tol.
    bool total_consistent(double tol = 1e-6) const;
};

/// Sum over stages of alpha_l * (||mu - mu_s||^2 + ||sigma - sigma_s||^2), averaged over views.
/// rendered stages are [S, C, H, W]; style stages [1, C, H, W].
torch::Tensor style_loss_image(const FeaturePyramid& rendered, const FeaturePyramid& style,
                               const std::array<double, 5>& alpha);

/// Statistics of all views concatenated along the spatial axis, matched once.
torch::Tensor style_loss_scene(const FeaturePyramid& rendered, const FeaturePyramid& style,
                               const std::array<double, 5>& alpha);

enum class FusionMode { scene, per_view };
FusionMode parse_fusion(const std::string& name);

struct Style3dOptions {
    GridSpec grid;
    FusionMode fusion = FusionMode::scene;
    /// When defined ([S, 3]), points are divided by the median camera-to-point distance first.
    torch::Tensor camera_centers;
};

/// Voxel-space statistics matching. `points` is the full-resolution point map;
/// it is resized to every stage. The grid is fitted once per call.
torch::Tensor style_loss_3d(const FeaturePyramid& rendered, const PointMap& points, const FeaturePyramid& style,
                            const std::array<double, 5>& alpha, const Style3dOptions& options = {});

/// MSE on stages 4 and 5.
torch::Tensor content_loss(const FeaturePyramid& rendered, const FeaturePyramid& content);

/// images [..., H, W]: mean squared horizontal plus mean squared vertical differences.
torch::Tensor tv_loss(const torch::Tensor& images);

/// 1 - cosine similarity of embeddings, averaged over rendered views.
torch::Tensor semantic_loss(const torch::Tensor& rendered, const torch::Tensor& style, const SemanticEncoder& encoder);

torch::Tensor reconstruction_loss(const torch::Tensor& rendered, const torch::Tensor& content);

struct DistillTerms {
    torch::Tensor depth, rotation, translation, fov;
    torch::Tensor total() const { return depth + rotation + translation + fov; }
};

/// depth [V, H, W] with mask [V, H, W]; cameras with V entries.
/// depth: masked mean |d / median(d) - d_t / median(d_t)| per view;
/// rotation: 1 - <q, q_t>^2 (zero for q and -q);
/// translation, fov: mean squared error.
DistillTerms distillation_loss(const torch::Tensor& depth, const CameraTensors& cams, const torch::Tensor& teacher_depth,
                               const CameraTensors& teacher_cams, const torch::Tensor& mask);

struct StageLoss {
    torch::Tensor total;
    LossReport report;
};

/// Stage 1: mse * rec + distill * distill.
/// Stage 2: mse * rec + style * style3d + content * content + clip * clip + tv * tv.
/// A component may be absent only if its weight is 0; otherwise ConfigError.
StageLoss stage_total(const std::map<std::string, torch::Tensor>& components, const LossWeights& weights, int stage);

} // namespace stylos
