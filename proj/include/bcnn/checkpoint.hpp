#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bcnn/tensor.hpp"

namespace bcnn {

// On-disk model snapshot. Binary layout, all integers little-endian:
//   "BCNN" magic, u32 version,
//   u64 config length + config JSON bytes,
//   u64 tensor count, then per tensor:
//     u64 name length + name bytes, u32 rank, i64 dims...,
//     u64 element count, f32 values,
//   u64 optimizer step count, u32 epoch.
// Tensor values are stored as 32-bit floats.
struct Checkpoint {
    std::uint32_t version = 1;
    std::string config_json;
    std::vector<std::pair<std::string, TensorPtr>> tensors;
    std::uint64_t adam_step = 0;
    std::uint32_t epoch = 0;
};

// Writes to a temporary file and renames into place.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);

Checkpoint load_checkpoint(const std::string& path);

} // namespace bcnn
