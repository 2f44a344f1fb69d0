#pragma once

#include "stylos/checkpoint.hpp"
#include "stylos/config.hpp"
#include "stylos/feature_extractor.hpp"
#include "stylos/losses.hpp"
#include "stylos/model.hpp"
#include "stylos/scene_data.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace stylos {

/// Which statistics-matching loss fills the style slot of the stage-2 objective.
enum class StyleLossKind { image, scene, voxel };
StyleLossKind parse_style_loss(const std::string& name); // img | scene | 3d
std::string to_string(StyleLossKind kind);

/// Training configuration. Config keys (defaults in parentheses):
///   train.stage (1), train.steps (2000), train.batch_scenes (1),
///   train.min_views (2), train.max_views (8), train.lr (5e-4),
///   train.lr_final_ratio (0.05), train.grad_clip (1.0), train.seed (0),
///   train.checkpoint_every (500), train.out (run), train.init,
///   train.style_loss (3d), voxel.resolution (32), voxel.fusion (scene),
///   data.scenes (comma-separated scene folders), data.styles (image or folder),
///   data.synthetic_scenes (1), data.synthetic_views (3), data.resolution (64),
///   data.seed (0), plus every ModelConfig and LossWeights key.
struct TrainConfig {
    int stage = 1;
    int64_t steps = 2000;
    int64_t batch_scenes = 1;
    int64_t min_views = 2;
    int64_t max_views = 8;
    double lr = 5e-4;
    double lr_final_ratio = 0.05;
    double grad_clip = 1.0;
    uint64_t seed = 0;
    int64_t checkpoint_every = 500;
    std::filesystem::path out_dir = "run";
    std::filesystem::path init_checkpoint;
    StyleLossKind style_loss = StyleLossKind::voxel;
    GridSpec grid;
    FusionMode fusion = FusionMode::scene;
    LossWeights weights;
    ModelConfig model;

    std::vector<std::filesystem::path> scene_dirs;
    std::filesystem::path styles;
    int64_t synthetic_scenes = 1;
    int64_t synthetic_views = 3;
    int64_t resolution = 64;
    uint64_t data_seed = 0;

    KeyValueConfig raw;

    void validate() const;
    static TrainConfig from_config(const KeyValueConfig& config);
    KeyValueConfig to_config() const;
};

struct TrainingData {
    std::vector<SceneBatch> scenes;
    std::vector<torch::Tensor> styles; // [H, W, 3]
};

/// Scene folders if configured, else synthetic scenes; style images from
/// data.styles, else procedural styles (stage 2 only).
TrainingData load_training_data(const TrainConfig& config);

/// Ground truth re-expressed in the first selected view's camera frame and
/// divided by the median valid depth of the selected views.
struct TeacherTargets {
    torch::Tensor depth;  // [V, H, W]
    torch::Tensor mask;   // [V, H, W]
    CameraTensors cameras;
    double scale = 1.0;
};
TeacherTargets teacher_targets(const SceneBatch& scene);

struct TrainResult {
    std::filesystem::path checkpoint;
    int64_t steps_run = 0;
    std::vector<LossReport> history;
};

using StepCallback = std::function<void(const LossReport&)>;

/// Runs stage 1 or 2 as configured. Stage 2 requires config.init_checkpoint
/// (ConfigError "stage-1 checkpoint required" otherwise). Writes
/// <out>/stage<k>_losses.jsonl, periodic <out>/stage<k>_step<n>.ckpt and the
/// final <out>/stage<k>_final.ckpt. A non-finite loss aborts with
/// InvariantError without overwriting earlier checkpoints.
TrainResult train(const TrainConfig& config, const TrainingData& data, const StepCallback& on_step = {});

/// Rebuilds a model from a checkpoint (architecture from its stored config).
StylosModel load_model(const Checkpoint& ckpt);
Checkpoint make_checkpoint(const StylosModel& model, int stage, int64_t step, const KeyValueConfig& extra = {});

struct StylizeResult {
    GaussianSet gaussians;
    CameraTensors cameras; // one per input view
    std::vector<RenderOutput> renders;
    torch::Tensor depth;   // [N, H, W] predicted
};

/// Single forward pass without optimization. images [N, 3, H, W], style [3, H, W].
/// views_per_batch > 0 splits the views into chunks that each also include
/// view 0 as the shared reference frame; the chunk Gaussians are merged.
StylizeResult stylize(StylosModel& model, const torch::Tensor& images, const torch::Tensor& style,
                      int64_t views_per_batch = 0);

/// True when STYLOS_DETERMINISTIC=1; also applies the deterministic settings.
bool apply_determinism_from_env();

} // namespace stylos
