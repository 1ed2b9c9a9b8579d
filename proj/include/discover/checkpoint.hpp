#pragma once

// Binary checkpoint: "DSCK", u32 version, u64 config digest, the canonical
// config text, then named float64 tensors (parameters, Adam moments, counters,
// per-epoch loss history).

#include <filesystem>

#include "discover/training.hpp"

namespace discover {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const training::TrainState& state);

/// Throws FormatError on a bad header, digest mismatch, truncation or a
/// tensor whose shape disagrees with the stored config.
training::TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace discover
