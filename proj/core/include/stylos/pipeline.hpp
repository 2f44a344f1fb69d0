#pragma once

#include "stylos/evaluation.hpp"
#include "stylos/scene_data.hpp"
#include "stylos/style_aggregator.hpp"
#include "stylos/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stylos {

struct StylizeRequest {
    std::filesystem::path checkpoint;
    std::filesystem::path content;
    std::filesystem::path style;
    std::filesystem::path out;
    std::optional<CouplingMode> coupling; // must match the checkpoint when given
    int64_t views_per_batch = 0;
    int64_t resolution = 0;               // 0: the checkpoint's data.resolution
};

struct StylizeSummary {
    int64_t views = 0;
    int64_t gaussians = 0;
    uint64_t checksum_before = 0;
    uint64_t checksum_after = 0;
    double seconds = 0.0;
};

/// Writes view_%04d.png, view_%04d.depth, gaussians.sgsp (+ .json sidecar),
/// cameras.json and manifest.json under request.out.
StylizeSummary stylize_to_dir(const StylizeRequest& request);

/// Consistency of stylized renders, warped with the scene's ground-truth
/// depth and poses (re-expressed as in teacher_targets).
struct ConsistencyReport {
    ConsistencyScore short_range; // delta 1
    ConsistencyScore long_range;  // delta 7 (absent if fewer than 8 views)
    bool has_long = false;
};
ConsistencyReport scene_consistency(const FeatureExtractor& extractor, const torch::Tensor& renders,
                                    const SceneBatch& scene);

/// Compares a stylize output folder against a scene folder and writes a JSON
/// report with per-view and mean PSNR/SSIM/perceptual values and short/long
/// consistency.
void evaluate_dirs(const std::filesystem::path& renders, const std::filesystem::path& scene,
                   const std::filesystem::path& report);

struct BenchRow {
    int64_t views = 0;
    double seconds = 0.0;
    double peak_mb = 0.0;
};
/// Times one stylize pass per view count on synthetic scenes. Rows follow the
/// (sorted, deduplicated) view counts.
std::vector<BenchRow> bench(std::vector<int64_t> views, int64_t resolution,
                            const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

/// Resets the process high-water mark when the kernel allows it.
void reset_peak_memory();
/// Peak resident set size in MiB.
double peak_memory_mb();

struct AblationRow {
    std::string loss;
    ConsistencyReport consistency;
    std::filesystem::path checkpoint;
};
/// Trains one stage-2 variant per style loss from the configured stage-1
/// checkpoint and scores each on the first training scene.
std::vector<AblationRow> ablate_losses(const TrainConfig& config, const std::vector<StyleLossKind>& losses);

} // namespace stylos
