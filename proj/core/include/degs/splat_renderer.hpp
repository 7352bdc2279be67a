// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/camera.hpp"
#include "degs/common.hpp"
#include "degs/scene_model.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace degs {

inline constexpr int kTileSize = 16;

struct RenderOptions {
  /// Keep the per-pixel contribution records needed by render_backward.
  bool retain_records = true;
  /// Blending terms with alpha' below this are skipped; it also bounds each
  /// splat's screen footprint.
  double min_contribution = 1e-8;
  /// A pixel stops blending once its transmittance drops below this.
  double transmittance_floor = 1e-4;
  /// Added to the projected covariance diagonal, in px^2.
  double cov2d_floor = 0.3;
  /// Splats whose cull_sigma footprint lies entirely outside the frame are dropped.
  double cull_sigma = 3.0;
};

struct ProjectedSplat {
  Vec2 mean2d;
  Mat2 cov2d;
  double depth = 0.0;
  std::size_t primitive_index = 0;
};

/// EWA projection. Returns nullopt when culled.
std::optional<ProjectedSplat> project_gaussian(const GaussianPrimitive& primitive,
                                               const Camera& camera,
                                               const RenderOptions& options = {},
                                               std::size_t primitive_index = 0);

/// Screen-space data used by the blending loop.
struct SplatRecord {
  double mean_x, mean_y;
  double conic_a, conic_b, conic_c;  // inverse of the 2D covariance
  double alpha;
  double log_cutoff;  // power below which alpha * exp(power) < min_contribution
  double rgb[3];
  double depth;
  std::uint32_t primitive_index;
  int x0, y0, x1, y1;  // inclusive pixel bounding box of the footprint
};

/// Forward intermediates kept per visible splat for the backward pass.
struct ProjectionCache {
  Mat3 rot;            // rotation matrix of the unit quaternion
  Vec4 unit_q;
  double raw_q_norm;
  Vec3 scale;
  Mat3 cov3d;
  Vec3 t_cam;
  Mat23 jacobian;
  double cov_a, cov_b, cov_c;  // 2D covariance incl. floor
  Vec3 view_dir;               // unit direction from camera centre (SH only)
  double view_dist;
  double sh_rest[9];           // degree-1 SH coefficients, basis-major (SH only)
};

struct ContributionRecords {
  Camera camera;
  Vec3 background = Vec3::Zero();
  RenderOptions options;
  std::size_t cloud_size = 0;
  std::size_t color_dim = 3;
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<SplatRecord> splats;        // depth-sorted
  std::vector<ProjectionCache> caches;    // parallel to splats
  std::vector<std::uint32_t> tile_offsets;  // CSR offsets, tiles_x * tiles_y + 1
  std::vector<std::uint32_t> tile_entries;  // indices into splats
  std::vector<std::uint32_t> pixel_end;     // per pixel: end position in tile_entries
};

struct RenderOutput {
  Image color;    // H x W x 3
  Image opacity;  // H x W x 1, accumulated alpha
  std::size_t visible_count = 0;
  std::shared_ptr<const ContributionRecords> records;  // null unless retained
};

RenderOutput render(const PrimitiveCloud& cloud, const Camera& camera, const Vec3& background,
                    const RenderOptions& options = {});

/// Same blending evaluated with a plain per-pixel loop over every sorted splat.
/// Bit-identical to render(); kept as the reference for the tiled traversal.
RenderOutput render_untiled(const PrimitiveCloud& cloud, const Camera& camera,
                            const Vec3& background, const RenderOptions& options = {});

struct RenderGradients {
  CloudTensors params;  // same row layout as the rendered cloud
  /// |dL/d mean2d| in NDC units per primitive, zero for culled splats.
  std::vector<double> mean2d_grad_norm;
  std::vector<std::uint8_t> visible;
};

/// Exact reverse-mode derivative of render(). grad_opacity may be null.
RenderGradients render_backward(const RenderOutput& output, const Image& grad_color,
                                const Image* grad_opacity = nullptr);

}  // namespace degs
