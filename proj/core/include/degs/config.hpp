// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace degs {

struct RunConfig {
  TrainingConfig training;
  std::uint64_t seed = 0;
  std::filesystem::path dataset;
  std::filesystem::path out;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys and
/// malformed values raise a configuration error naming the line.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Canonical text form accepted by parse_run_config.
std::string format_run_config(const RunConfig& config);

}  // namespace degs
