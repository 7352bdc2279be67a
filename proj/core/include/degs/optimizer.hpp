// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/common.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace degs {

struct AdamGroupConfig {
  double learning_rate = 1e-3;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW) when > 0
  friend bool operator==(const AdamGroupConfig&, const AdamGroupConfig&) = default;
};

struct AdamGroup {
  AdamGroupConfig config;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  friend bool operator==(const AdamGroup&, const AdamGroup&) = default;
};

/// Bias-corrected Adam with named parameter groups. Groups are stepped in
/// caller order; every update is a serial loop so trajectories are bit-stable.
class AdamOptimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;

  void add_group(const std::string& name, const AdamGroupConfig& config, std::size_t size);
  bool has_group(const std::string& name) const { return groups_.count(name) != 0; }
  AdamGroup& group(const std::string& name);
  const AdamGroup& group(const std::string& name) const;
  const std::map<std::string, AdamGroup>& groups() const noexcept { return groups_; }
  std::map<std::string, AdamGroup>& groups() noexcept { return groups_; }

  /// One update of `params` from `grads`. The learning rate is the group's
  /// rate times `lr_scale`. A non-finite gradient entry skips the whole
  /// tensor (no state change) and returns false.
  bool step(const std::string& name, std::span<double> params, std::span<const double> grads,
            double lr_scale = 1.0);

  /// Reorders row-major moments after densification. Row k of the new tensor
  /// takes row source[k] of the old one, or zeros when fresh[k] is set.
  void remap_rows(const std::string& name, std::size_t row_width,
                  const std::vector<std::size_t>& source, const std::vector<std::uint8_t>& fresh);

  std::size_t skipped_steps() const noexcept { return skipped_steps_; }
  void set_skipped_steps(std::size_t n) noexcept { skipped_steps_ = n; }

  friend bool operator==(const AdamOptimizer&, const AdamOptimizer&) = default;

 private:
  std::map<std::string, AdamGroup> groups_;
  std::size_t skipped_steps_ = 0;
};

}  // namespace degs
