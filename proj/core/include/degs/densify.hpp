// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/scene_model.hpp"
#include "degs/splat_renderer.hpp"

#include <cstdint>
#include <vector>

namespace degs {

struct DensifyConfig {
  bool enabled = true;
  double grad_threshold = 2e-4;  // mean screen-space gradient norm, NDC units
  int interval = 100;
  int start_iteration = 500;
  int stop_iteration = 15000;
  double percent_dense = 0.01;     // clone/split boundary, fraction of scene extent
  double min_opacity = 0.005;
  double max_world_size = 1.0;     // prune above this fraction of scene extent
  double split_scale_divisor = 1.6;
  int split_children = 2;
  std::size_t max_primitives = 0;  // 0 = unbounded

  void validate() const;
  /// True when a densify pass is due after `iteration` (1-based).
  bool due(int iteration) const noexcept;
  friend bool operator==(const DensifyConfig&, const DensifyConfig&) = default;
};

/// Running sum of screen-space positional gradient norms per primitive.
struct GradientStats {
  std::vector<double> accum;
  std::vector<std::uint32_t> count;

  void reset(std::size_t rows);
  void accumulate(const RenderGradients& grads);
  double mean(std::size_t i) const noexcept {
    return count[i] == 0 ? 0.0 : accum[i] / static_cast<double>(count[i]);
  }
};

struct DensifyResult {
  PrimitiveCloud cloud;
  /// Row k of `cloud` derives from row source[k] of the input.
  std::vector<std::size_t> source;
  /// 1 for rows created by clone/split (fresh optimizer state).
  std::vector<std::uint8_t> fresh;
  std::size_t cloned = 0;
  std::size_t split = 0;
  std::size_t pruned = 0;
};

/// Clones small high-gradient splats, splits large ones and prunes
/// transparent or oversized ones. Output order: survivors, clones, split
/// children. Throws invalid_input if nothing would survive.
DensifyResult densify_and_prune(const PrimitiveCloud& cloud, const GradientStats& stats,
                                const DensifyConfig& config, double scene_extent,
                                std::uint64_t seed);

}  // namespace degs
