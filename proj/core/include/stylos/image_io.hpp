#pragma once

#include <torch/torch.h>

#include <filesystem>

namespace stylos {

/// Decodes a PNG/JPEG file into an [H, W, 3] float32 tensor in [0, 1].
/// Throws InputError naming the file when it cannot be decoded.
torch::Tensor read_image(const std::filesystem::path& path);

/// Writes an [H, W, 3] tensor in [0, 1] as an 8-bit PNG.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

/// Center-crops to a square and resizes to resolution x resolution (area
/// filter when shrinking, bilinear when enlarging).
torch::Tensor center_crop_resize(const torch::Tensor& image, int64_t resolution);

/// Depth maps are stored as "SDEP", uint32 height, uint32 width, then
/// height*width little-endian float32 values in row-major order.
void write_depth(const std::filesystem::path& path, const torch::Tensor& depth);
torch::Tensor read_depth(const std::filesystem::path& path);

} // namespace stylos
