#pragma once

#include "stylos/config.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>

namespace stylos {

/// Keyed binary archive, little-endian:
///   "STYLOSCK" | u32 version (1) | u32 stage | i64 step
///   | u64 config_bytes | config text (KeyValueConfig dump)
///   | u64 entry_count | entries
/// entry: u32 name_bytes | name | u8 dtype (0 f32, 1 f64, 2 i64) | u32 ndim
///        | i64 dims[ndim] | raw data (row-major).
/// Model parameters are stored under their module path, Adam state under
/// "optim/<param>/{exp_avg,exp_avg_sq,step}".
struct Checkpoint {
    KeyValueConfig config;
    int stage = 0;
    int64_t step = 0;
    std::map<std::string, torch::Tensor> tensors;

    void save(const std::filesystem::path& path) const;
    /// Throws InputError for unreadable or malformed files.
    static Checkpoint load(const std::filesystem::path& path);
};

/// Copies named parameters and buffers of `module` into `ckpt.tensors`.
void store_module(const torch::nn::Module& module, Checkpoint& ckpt);
/// Loads parameters/buffers by name. Throws InputError on missing names or shape mismatches.
void restore_module(torch::nn::Module& module, const Checkpoint& ckpt);

void store_adam(const torch::optim::Adam& optimizer, const torch::nn::Module& module, Checkpoint& ckpt);
void restore_adam(torch::optim::Adam& optimizer, const torch::nn::Module& module, const Checkpoint& ckpt);

/// FNV-1a over the raw bytes of the given parameters (order-sensitive).
uint64_t parameter_checksum(const std::vector<torch::Tensor>& params);

} // namespace stylos
