// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>

#include "drum/adapter.hpp"

namespace drum {

struct CheckpointInfo {
  std::int64_t step = 0;
  std::uint64_t seed = 0;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// Writes `dir/manifest.json` (architecture, tensor table, step, seed) and
/// `dir/weights.bin`: every tensor of AdapterParams::tensors() in order,
/// row-major, as little-endian f32 with no header.
void save_checkpoint(const AdapterParams& params, const CheckpointInfo& info, const std::filesystem::path& dir);

struct LoadedCheckpoint {
  AdapterParams params;
  CheckpointInfo info;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace drum
