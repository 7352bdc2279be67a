// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace degs {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Serializes the whole training state into one "DEGS" container.
std::string encode_checkpoint(const TrainingState& state);
TrainingState decode_checkpoint(const std::string& bytes);

/// Atomic write: temp file in the same directory, then rename.
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
TrainingState load_checkpoint(const std::filesystem::path& path);

/// Throws dimension_mismatch when the checkpoint cannot be trained with
/// `config` (embedding width, color width).
void check_compatible(const TrainingState& state, const TrainingConfig& config);

/// Human-readable summary of every shape and version field.
std::string describe_checkpoint(const TrainingState& state);

}  // namespace degs
