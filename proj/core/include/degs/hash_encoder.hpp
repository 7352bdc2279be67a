// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/common.hpp"
#include "degs/scene_model.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace degs {

struct HashEncoderConfig {
  int levels = 8;
  int log2_table_size = 14;
  int features = 2;
  int min_resolution = 16;
  int max_resolution = 256;

  void validate() const;
  friend bool operator==(const HashEncoderConfig&, const HashEncoderConfig&) = default;
};

/// Bilinear lookup record for one (plane, level) pair of one query.
struct PlaneLevelTrace {
  std::array<std::uint32_t, 4> rows;  // (i,j), (i+1,j), (i,j+1), (i+1,j+1)
  double fu, fv;
};

struct EncodeTrace {
  std::vector<PlaneLevelTrace> cells;  // plane-major, then level
  Vec3 du_dmu = Vec3::Zero();          // zero on clamped axes
};

/// Three axis-aligned planar multiresolution hash grids (XY, XZ, YZ).
/// Tables are laid out [plane][level][row][feature].
class TriPlaneHashEncoder {
 public:
  TriPlaneHashEncoder() = default;
  TriPlaneHashEncoder(const HashEncoderConfig& config, const Aabb& bounds);

  const HashEncoderConfig& config() const noexcept { return config_; }
  const Aabb& bounds() const noexcept { return bounds_; }
  int output_width() const noexcept { return 3 * config_.levels * config_.features; }
  std::size_t table_size() const noexcept { return std::size_t{1} << config_.log2_table_size; }
  int resolution(int level) const { return resolutions_.at(static_cast<std::size_t>(level)); }

  std::vector<double>& tables() noexcept { return tables_; }
  const std::vector<double>& tables() const noexcept { return tables_; }

  void init_uniform(std::uint64_t seed, double half_range = 1e-4);

  /// Table row of grid vertex (i, j) at `level` in `plane`.
  std::uint32_t vertex_row(int plane, int level, int i, int j) const;

  /// Writes output_width() features into `out`. Returns true when `mu` was
  /// outside the bounds and got clamped.
  bool encode(const Vec3& mu, double* out, EncodeTrace* trace = nullptr) const;

  /// Accumulates dL/dtables into `d_tables` (same layout as tables()) and
  /// returns dL/dmu.
  Vec3 backward(const EncodeTrace& trace, const double* d_out, double* d_tables) const;

  friend bool operator==(const TriPlaneHashEncoder&, const TriPlaneHashEncoder&) = default;

 private:
  HashEncoderConfig config_;
  Aabb bounds_;
  std::vector<int> resolutions_;
  std::vector<double> tables_;
};

}  // namespace degs
