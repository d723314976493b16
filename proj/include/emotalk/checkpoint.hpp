#pragma once

// Binary checkpoint: 8-byte magic "EMOTALK\0", u32 format version, u64
// manifest length, a JSON manifest, then the raw little-endian doubles of
// every array in manifest order. The manifest records the model config and,
// for each array, its name, shape, frozen flag, role and byte offset.

#include <cstdint>
#include <filesystem>

#include "emotalk/model.hpp"
#include "emotalk/training.hpp"

namespace emotalk {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedModel {
  ModelConfig config;
  ModelParams params;
  long long step = 0;
};

/// Parameters only.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams& params,
                     long long step = 0);
/// Parameters plus optimizer moments, step counter and sampler state.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);

/// Throws FormatError on a bad magic, unsupported version or inconsistent
/// manifest, IoError if the file cannot be read.
LoadedModel load_model(const std::filesystem::path& path);
/// Additionally requires the optimizer state.
TrainState load_train_state(const std::filesystem::path& path);

}  // namespace emotalk
