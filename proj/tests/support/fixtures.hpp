#pragma once

#include "stylos/model.hpp"

namespace stylos::testing {

// Small enough for fast unit tests; patch 8 keeps 16x16 inputs at a 2x2 grid.
inline ModelConfig tiny_model(CouplingMode coupling = CouplingMode::global_only) {
    ModelConfig c;
    c.backbone.depth = 1;
    c.backbone.width = 16;
    c.backbone.heads = 2;
    c.backbone.patch_size = 8;
    c.backbone.mlp_ratio = 2;
    c.backbone.base_grid = 2;
    c.heads.features = 8;
    c.heads.skip_features = 4;
    c.aggregator_depth = 1;
    c.coupling = coupling;
    return c;
}

inline GaussianSet make_gaussians(const torch::Tensor& means, const torch::Tensor& confidences,
                                  torch::Dtype dtype = torch::kFloat64) {
    auto m = means.size(0);
    auto opt = torch::TensorOptions().dtype(dtype);
    GaussianSet g;
    g.means = means.to(dtype);
    g.opacities = torch::full({m}, 0.5, opt);
    g.rotations = torch::zeros({m, 4}, opt);
    g.rotations.select(1, 0).fill_(1.0);
    g.scales = torch::full({m, 3}, 0.1, opt);
    g.sh = torch::zeros({m, 3, 4}, opt);
    g.confidences = confidences.to(dtype);
    g.sh_degree = 1;
    return g;
}

} // namespace stylos::testing
