// SPDX-License-Identifier: Apache-2.0
#include "degs/splat_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace degs {
namespace {

constexpr double kShC0 = 0.28209479177387814;
constexpr double kShC1 = 0.4886025119029199;

struct Projection {
  bool visible = false;
  SplatRecord record{};
  ProjectionCache cache{};
};

bool row_is_finite(const PrimitiveCloud& cloud, std::size_t i) {
  if (!cloud.mu(i).allFinite() || !cloud.raw_scale(i).allFinite() ||
      !cloud.raw_rotation(i).allFinite() || !std::isfinite(cloud.raw_opacity(i))) {
    return false;
  }
  const double* c = cloud.color(i);
  for (std::size_t k = 0; k < cloud.color_dim(); ++k) {
    if (!std::isfinite(c[k])) return false;
  }
  return cloud.raw_rotation(i).squaredNorm() > 0.0;
}

// Geometry only; opacity and color are filled in by the caller.
bool project_geometry(const Vec3& mu, const Vec3& raw_scale, const Vec4& raw_rotation,
                      const Camera& cam, const RenderOptions& opt, SplatRecord& rec,
                      ProjectionCache& cache) {
  cache.t_cam = cam.to_camera(mu);
  const double x = cache.t_cam[0], y = cache.t_cam[1], z = cache.t_cam[2];
  if (!(z > cam.near) || !(z < cam.far)) return false;

  cache.raw_q_norm = raw_rotation.norm();
  cache.unit_q = raw_rotation / cache.raw_q_norm;
  cache.scale = raw_scale.array().exp().matrix();
  cache.rot = rotation_matrix(cache.unit_q);
  Mat3 m = cache.rot;
  for (int c = 0; c < 3; ++c) m.col(c) *= cache.scale[c];
  cache.cov3d = m * m.transpose();

  const double inv_z = 1.0 / z;
  cache.jacobian << cam.fx * inv_z, 0.0, -cam.fx * x * inv_z * inv_z,
      0.0, cam.fy * inv_z, -cam.fy * y * inv_z * inv_z;
  const Mat23 jw = cache.jacobian * cam.rotation;
  const Mat2 cov2 = jw * cache.cov3d * jw.transpose();
  cache.cov_a = cov2(0, 0) + opt.cov2d_floor;
  cache.cov_b = 0.5 * (cov2(0, 1) + cov2(1, 0));
  cache.cov_c = cov2(1, 1) + opt.cov2d_floor;

  rec.mean_x = cam.fx * x * inv_z + cam.cx;
  rec.mean_y = cam.fy * y * inv_z + cam.cy;
  rec.depth = z;

  const double sx = std::sqrt(cache.cov_a), sy = std::sqrt(cache.cov_c);
  const double k = opt.cull_sigma;
  if (rec.mean_x + k * sx < -0.5 || rec.mean_x - k * sx > cam.width - 0.5 ||
      rec.mean_y + k * sy < -0.5 || rec.mean_y - k * sy > cam.height - 0.5) {
    return false;
  }

  const double det = cache.cov_a * cache.cov_c - cache.cov_b * cache.cov_b;
  rec.conic_a = cache.cov_c / det;
  rec.conic_b = -cache.cov_b / det;
  rec.conic_c = cache.cov_a / det;
  return true;
}

void shade(const PrimitiveCloud& cloud, std::size_t i, const Camera& cam, SplatRecord& rec,
           ProjectionCache& cache) {
  const double* f = cloud.color(i);
  if (cloud.color_dim() == 3) {
    for (int ch = 0; ch < 3; ++ch) rec.rgb[ch] = f[ch];
    cache.view_dir = Vec3::Zero();
    cache.view_dist = 0.0;
    return;
  }
  const Vec3 v = cloud.mu(i) - cam.center();
  cache.view_dist = v.norm();
  cache.view_dir = v / cache.view_dist;
  const double dx = cache.view_dir[0], dy = cache.view_dir[1], dz = cache.view_dir[2];
  for (int ch = 0; ch < 3; ++ch) {
    rec.rgb[ch] = kShC0 * f[ch] +
                  kShC1 * (-dy * f[3 + ch] + dz * f[6 + ch] - dx * f[9 + ch]);
  }
  std::copy_n(f + 3, 9, cache.sh_rest);
}

// Sets alpha, cutoff and pixel bounding box. Returns false when the splat
// cannot reach min_contribution anywhere.
bool finalize_footprint(double alpha, const Camera& cam, const RenderOptions& opt,
                        const ProjectionCache& cache, SplatRecord& rec) {
  rec.alpha = alpha;
  if (!(alpha > opt.min_contribution)) return false;
  rec.log_cutoff = std::log(opt.min_contribution / alpha);
  // Ellipse {d : d^T conic d <= r^2} has half-widths r*sqrt(cov_aa), r*sqrt(cov_cc).
  const double r = std::sqrt(-2.0 * rec.log_cutoff);
  const double hx = r * std::sqrt(cache.cov_a);
  const double hy = r * std::sqrt(cache.cov_c);
  // One pixel of margin so borderline pixels are decided by the cutoff test alone.
  rec.x0 = std::max(0, static_cast<int>(std::floor(rec.mean_x - hx)) - 1);
  rec.y0 = std::max(0, static_cast<int>(std::floor(rec.mean_y - hy)) - 1);
  rec.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(rec.mean_x + hx)) + 1);
  rec.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(rec.mean_y + hy)) + 1);
  return rec.x0 <= rec.x1 && rec.y0 <= rec.y1;
}

// Upper bound of the splat's exponent over the pixel rectangle [x0,x1]x[y0,y1].
// Tiles where it stays below the cutoff hold no contributing pixel.
double max_power_over(const SplatRecord& s, double x0, double y0, double x1, double y1) {
  const double lo_x = x0 - s.mean_x, hi_x = x1 - s.mean_x;
  const double lo_y = y0 - s.mean_y, hi_y = y1 - s.mean_y;
  if (lo_x <= 0.0 && hi_x >= 0.0 && lo_y <= 0.0 && hi_y >= 0.0) return 0.0;
  auto q = [&](double dx, double dy) {
    return s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
  };
  double best = std::numeric_limits<double>::infinity();
  for (double dx : {lo_x, hi_x}) {
    const double dy = std::clamp(-s.conic_b * dx / s.conic_c, lo_y, hi_y);
    best = std::min(best, q(dx, dy));
  }
  for (double dy : {lo_y, hi_y}) {
    const double dx = std::clamp(-s.conic_b * dy / s.conic_a, lo_x, hi_x);
    best = std::min(best, q(dx, dy));
  }
  return -0.5 * best;
}

bool tile_reached(const SplatRecord& s, int tx, int ty, int width, int height) {
  const int x0 = tx * kTileSize, y0 = ty * kTileSize;
  const int x1 = std::min(width, x0 + kTileSize) - 1, y1 = std::min(height, y0 + kTileSize) - 1;
  return max_power_over(s, x0, y0, x1, y1) >= s.log_cutoff - 1e-6;
}

std::shared_ptr<ContributionRecords> prepare(const PrimitiveCloud& cloud, const Camera& camera,
                                             const Vec3& background,
                                             const RenderOptions& options) {
  camera.validate();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!row_is_finite(cloud, i)) throw RenderAbort(i);
  }

  auto rec = std::make_shared<ContributionRecords>();
  rec->camera = camera;
  rec->background = background;
  rec->options = options;
  rec->cloud_size = cloud.size();
  rec->color_dim = cloud.color_dim();
  rec->tiles_x = (camera.width + kTileSize - 1) / kTileSize;
  rec->tiles_y = (camera.height + kTileSize - 1) / kTileSize;

  const auto n = static_cast<std::int64_t>(cloud.size());
  std::vector<Projection> proj(cloud.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    auto& p = proj[static_cast<std::size_t>(i)];
    const auto row = static_cast<std::size_t>(i);
    if (!project_geometry(cloud.mu(row), cloud.raw_scale(row), cloud.raw_rotation(row), camera,
                          options, p.record, p.cache)) {
      continue;
    }
    if (!finalize_footprint(sigmoid(cloud.raw_opacity(row)), camera, options, p.cache,
                            p.record)) {
      continue;
    }
    shade(cloud, row, camera, p.record, p.cache);
    p.record.primitive_index = static_cast<std::uint32_t>(row);
    p.visible = true;
  }

  std::vector<std::uint32_t> order;
  order.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (proj[i].visible) order.push_back(static_cast<std::uint32_t>(i));
  }
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double da = proj[a].record.depth, db = proj[b].record.depth;
    return da < db || (da == db && a < b);
  });
  rec->splats.reserve(order.size());
  rec->caches.reserve(order.size());
  for (auto i : order) {
    rec->splats.push_back(proj[i].record);
    rec->caches.push_back(proj[i].cache);
  }

  // Bin splats into tiles, preserving depth order within each tile.
  const std::size_t tile_count = static_cast<std::size_t>(rec->tiles_x) * rec->tiles_y;
  std::vector<std::uint32_t> counts(tile_count + 1, 0);
  for (const auto& s : rec->splats) {
    for (int ty = s.y0 / kTileSize; ty <= s.y1 / kTileSize; ++ty) {
      for (int tx = s.x0 / kTileSize; tx <= s.x1 / kTileSize; ++tx) {
        if (!tile_reached(s, tx, ty, camera.width, camera.height)) continue;
        ++counts[static_cast<std::size_t>(ty) * rec->tiles_x + tx + 1];
      }
    }
  }
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  rec->tile_offsets = counts;
  rec->tile_entries.resize(counts.back());
  std::vector<std::uint32_t> cursor(counts.begin(), counts.end() - 1);
  for (std::uint32_t k = 0; k < rec->splats.size(); ++k) {
    const auto& s = rec->splats[k];
    for (int ty = s.y0 / kTileSize; ty <= s.y1 / kTileSize; ++ty) {
      for (int tx = s.x0 / kTileSize; tx <= s.x1 / kTileSize; ++tx) {
        if (!tile_reached(s, tx, ty, camera.width, camera.height)) continue;
        rec->tile_entries[cursor[static_cast<std::size_t>(ty) * rec->tiles_x + tx]++] = k;
      }
    }
  }
  rec->pixel_end.assign(static_cast<std::size_t>(camera.width) * camera.height, 0);
  return rec;
}

// Front-to-back blending of one pixel over entries [begin, end). `index_of`
// maps a list position to a splat record index.
template <typename IndexOf>
inline std::uint32_t blend_pixel(const ContributionRecords& rec, int px, int py,
                                 std::uint32_t begin, std::uint32_t end, IndexOf index_of,
                                 double rgb_out[3], double& t_out) {
  const double floor = rec.options.transmittance_floor;
  double t = 1.0;
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  std::uint32_t last = begin;
  for (std::uint32_t k = begin; k < end; ++k) {
    const SplatRecord& s = rec.splats[index_of(k)];
    const double dx = px - s.mean_x;
    const double dy = py - s.mean_y;
    const double power = -0.5 * (s.conic_a * dx * dx + s.conic_c * dy * dy) - s.conic_b * dx * dy;
    if (power < s.log_cutoff) continue;
    const double a = s.alpha * std::exp(power);
    const double w = a * t;
    c0 += s.rgb[0] * w;
    c1 += s.rgb[1] * w;
    c2 += s.rgb[2] * w;
    t *= 1.0 - a;
    last = k + 1;
    if (t < floor) break;
  }
  rgb_out[0] = c0;
  rgb_out[1] = c1;
  rgb_out[2] = c2;
  t_out = t;
  return last;
}

void write_pixel(RenderOutput& out, const Vec3& bg, int px, int py, const double rgb[3],
                 double t) {
  for (int ch = 0; ch < 3; ++ch) out.color.at(px, py, ch) = rgb[ch] + bg[ch] * t;
  out.opacity.at(px, py) = 1.0 - t;
}

RenderOutput make_output(const Camera& camera, std::shared_ptr<ContributionRecords> rec,
                         bool retain) {
  RenderOutput out;
  out.color = Image(camera.width, camera.height, 3);
  out.opacity = Image(camera.width, camera.height, 1);
  out.visible_count = rec->splats.size();
  if (retain) out.records = std::move(rec);
  return out;
}

}  // namespace

std::optional<ProjectedSplat> project_gaussian(const GaussianPrimitive& primitive,
                                               const Camera& camera,
                                               const RenderOptions& options,
                                               std::size_t primitive_index) {
  camera.validate();
  if (!primitive.mu.allFinite() || !primitive.raw_scale.allFinite() ||
      !primitive.raw_rotation.allFinite() || primitive.raw_rotation.squaredNorm() == 0.0) {
    throw Error(ErrorKind::invalid_parameter, "cannot project a non-finite primitive");
  }
  SplatRecord rec{};
  ProjectionCache cache{};
  if (!project_geometry(primitive.mu, primitive.raw_scale, primitive.raw_rotation, camera, options,
                        rec, cache)) {
    return std::nullopt;
  }
  ProjectedSplat out;
  out.mean2d = Vec2(rec.mean_x, rec.mean_y);
  out.cov2d << cache.cov_a, cache.cov_b, cache.cov_b, cache.cov_c;
  out.depth = rec.depth;
  out.primitive_index = primitive_index;
  return out;
}

RenderOutput render(const PrimitiveCloud& cloud, const Camera& camera, const Vec3& background,
                    const RenderOptions& options) {
  auto rec = prepare(cloud, camera, background, options);
  RenderOutput out = make_output(camera, rec, options.retain_records);
  const ContributionRecords& r = *rec;
  const int tile_count = r.tiles_x * r.tiles_y;

#pragma omp parallel for schedule(dynamic, 1)
  for (int tile = 0; tile < tile_count; ++tile) {
    const int tx = tile % r.tiles_x, ty = tile / r.tiles_x;
    const std::uint32_t begin = r.tile_offsets[tile], end = r.tile_offsets[tile + 1];
    auto index_of = [&](std::uint32_t k) { return r.tile_entries[k]; };
    const int y_end = std::min(camera.height, (ty + 1) * kTileSize);
    const int x_end = std::min(camera.width, (tx + 1) * kTileSize);
    for (int py = ty * kTileSize; py < y_end; ++py) {
      for (int px = tx * kTileSize; px < x_end; ++px) {
        double rgb[3];
        double t;
        const std::uint32_t last = blend_pixel(r, px, py, begin, end, index_of, rgb, t);
        rec->pixel_end[static_cast<std::size_t>(py) * camera.width + px] = last;
        write_pixel(out, background, px, py, rgb, t);
      }
    }
  }
  return out;
}

RenderOutput render_untiled(const PrimitiveCloud& cloud, const Camera& camera,
                            const Vec3& background, const RenderOptions& options) {
  auto rec = prepare(cloud, camera, background, options);
  RenderOutput out = make_output(camera, rec, false);
  const auto count = static_cast<std::uint32_t>(rec->splats.size());
  for (int py = 0; py < camera.height; ++py) {
    for (int px = 0; px < camera.width; ++px) {
      double rgb[3];
      double t;
      blend_pixel(*rec, px, py, 0, count, [](std::uint32_t k) { return k; }, rgb, t);
      write_pixel(out, background, px, py, rgb, t);
    }
  }
  return out;
}

namespace {

// Screen-space gradient of one tile-list entry.
struct EntryGrad {
  double mean_x, mean_y;
  double conic_a, conic_b, conic_c;
  double alpha;
  double rgb[3];
};

struct Contribution {
  std::uint32_t splat;
  double alpha_prime;
  double gauss;
  double t_before;
  double dx, dy;
  std::uint32_t entry;
};

}  // namespace

RenderGradients render_backward(const RenderOutput& output, const Image& grad_color,
                                const Image* grad_opacity) {
  if (!output.records) {
    throw Error(ErrorKind::state, "render_backward needs contribution records; render with "
                                  "retain_records enabled");
  }
  const ContributionRecords& r = *output.records;
  const Camera& cam = r.camera;
  if (grad_color.width != cam.width || grad_color.height != cam.height ||
      grad_color.channels != 3) {
    throw Error(ErrorKind::invalid_input, "color gradient image does not match render size");
  }
  if (grad_opacity != nullptr &&
      (grad_opacity->width != cam.width || grad_opacity->height != cam.height ||
       grad_opacity->channels != 1)) {
    throw Error(ErrorKind::invalid_input, "opacity gradient image does not match render size");
  }

  std::vector<EntryGrad> entry_grads(r.tile_entries.size(), EntryGrad{});
  const int tile_count = r.tiles_x * r.tiles_y;
  const Vec3 bg = r.background;

#pragma omp parallel
  {
    std::vector<Contribution> stack;
#pragma omp for schedule(dynamic, 1)
    for (int tile = 0; tile < tile_count; ++tile) {
      const int tx = tile % r.tiles_x, ty = tile / r.tiles_x;
      const std::uint32_t begin = r.tile_offsets[tile];
      const int y_end = std::min(cam.height, (ty + 1) * kTileSize);
      const int x_end = std::min(cam.width, (tx + 1) * kTileSize);
      for (int py = ty * kTileSize; py < y_end; ++py) {
        for (int px = tx * kTileSize; px < x_end; ++px) {
          const std::size_t pix = static_cast<std::size_t>(py) * cam.width + px;
          const double gc[3] = {grad_color.pixels[3 * pix], grad_color.pixels[3 * pix + 1],
                                grad_color.pixels[3 * pix + 2]};
          const double go = grad_opacity ? grad_opacity->pixels[pix] : 0.0;
          if (gc[0] == 0.0 && gc[1] == 0.0 && gc[2] == 0.0 && go == 0.0) continue;

          // Replay the forward pass for this pixel.
          stack.clear();
          double t = 1.0;
          const std::uint32_t end = r.pixel_end[pix];
          for (std::uint32_t k = begin; k < end; ++k) {
            const std::uint32_t si = r.tile_entries[k];
            const SplatRecord& s = r.splats[si];
            const double dx = px - s.mean_x;
            const double dy = py - s.mean_y;
            const double power =
                -0.5 * (s.conic_a * dx * dx + s.conic_c * dy * dy) - s.conic_b * dx * dy;
            if (power < s.log_cutoff) continue;
            const double g = std::exp(power);
            const double a = s.alpha * g;
            stack.push_back({si, a, g, t, dx, dy, k});
            t *= 1.0 - a;
          }

          // Reverse sweep: `behind` is the color seen through a splat, `pass`
          // the product of (1 - alpha') of everything behind it.
          double behind[3] = {bg[0], bg[1], bg[2]};
          double pass = 1.0;
          for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
            const SplatRecord& s = r.splats[it->splat];
            EntryGrad& eg = entry_grads[it->entry];
            const double a = it->alpha_prime;
            const double w = a * it->t_before;
            double d_alpha_prime = 0.0;
            for (int ch = 0; ch < 3; ++ch) {
              eg.rgb[ch] += gc[ch] * w;
              d_alpha_prime += gc[ch] * (s.rgb[ch] - behind[ch]);
            }
            d_alpha_prime = it->t_before * (d_alpha_prime + go * pass);
            for (int ch = 0; ch < 3; ++ch) behind[ch] = s.rgb[ch] * a + (1.0 - a) * behind[ch];
            pass *= 1.0 - a;

            eg.alpha += d_alpha_prime * it->gauss;
            const double d_power = d_alpha_prime * a;
            const double dx = it->dx, dy = it->dy;
            eg.conic_a += -0.5 * dx * dx * d_power;
            eg.conic_b += -dx * dy * d_power;
            eg.conic_c += -0.5 * dy * dy * d_power;
            eg.mean_x += d_power * (s.conic_a * dx + s.conic_b * dy);
            eg.mean_y += d_power * (s.conic_b * dx + s.conic_c * dy);
          }
        }
      }
    }
  }

  // Tile-major reduction into per-splat totals.
  std::vector<EntryGrad> splat_grads(r.splats.size(), EntryGrad{});
  for (std::size_t k = 0; k < r.tile_entries.size(); ++k) {
    EntryGrad& dst = splat_grads[r.tile_entries[k]];
    const EntryGrad& src = entry_grads[k];
    dst.mean_x += src.mean_x;
    dst.mean_y += src.mean_y;
    dst.conic_a += src.conic_a;
    dst.conic_b += src.conic_b;
    dst.conic_c += src.conic_c;
    dst.alpha += src.alpha;
    for (int ch = 0; ch < 3; ++ch) dst.rgb[ch] += src.rgb[ch];
  }

  RenderGradients out;
  out.params.resize(r.cloud_size, r.color_dim, 0);
  out.params.set_zero();
  out.mean2d_grad_norm.assign(r.cloud_size, 0.0);
  out.visible.assign(r.cloud_size, 0);

  const Mat3& w_rot = cam.rotation;
  const auto splat_count = static_cast<std::int64_t>(r.splats.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t si = 0; si < splat_count; ++si) {
    const SplatRecord& s = r.splats[static_cast<std::size_t>(si)];
    const ProjectionCache& c = r.caches[static_cast<std::size_t>(si)];
    const EntryGrad& g = splat_grads[static_cast<std::size_t>(si)];
    const std::size_t row = s.primitive_index;
    out.visible[row] = 1;

    // Opacity through the logistic activation.
    out.params.raw_opacity[row] = g.alpha * s.alpha * (1.0 - s.alpha);

    // Conic -> 2D covariance.
    const double a = c.cov_a, b = c.cov_b, cc = c.cov_c;
    const double det = a * cc - b * b;
    const double inv_det2 = 1.0 / (det * det);
    const double d_a = (-cc * cc * g.conic_a + b * cc * g.conic_b - b * b * g.conic_c) * inv_det2;
    const double d_b =
        (2.0 * b * cc * g.conic_a - (a * cc + b * b) * g.conic_b + 2.0 * a * b * g.conic_c) *
        inv_det2;
    const double d_c = (-b * b * g.conic_a + a * b * g.conic_b - a * a * g.conic_c) * inv_det2;
    Mat2 g_cov;
    g_cov << d_a, 0.5 * d_b, 0.5 * d_b, d_c;

    // cov2d = M cov3d M^T with M = J W.
    const Mat23 m = c.jacobian * w_rot;
    const Mat3 g_cov3 = m.transpose() * g_cov * m;
    const Mat23 g_m = 2.0 * g_cov * m * c.cov3d;
    const Mat23 g_j = g_m * w_rot.transpose();

    // cov3d = (R S)(R S)^T.
    Mat3 rs = c.rot;
    for (int k = 0; k < 3; ++k) rs.col(k) *= c.scale[k];
    const Mat3 g_rs = 2.0 * g_cov3 * rs;
    Mat3 g_rot;
    for (int k = 0; k < 3; ++k) {
      const double d_scale = g_rs.col(k).dot(c.rot.col(k));
      out.params.raw_scale[3 * row + k] = d_scale * c.scale[k];
      g_rot.col(k) = g_rs.col(k) * c.scale[k];
    }
    const Vec4 g_unit_q = rotation_matrix_vjp(c.unit_q, g_rot);
    const Vec4 g_raw_q = (g_unit_q - c.unit_q * c.unit_q.dot(g_unit_q)) / c.raw_q_norm;
    for (int k = 0; k < 4; ++k) out.params.raw_rotation[4 * row + k] = g_raw_q[k];

    // Mean and Jacobian -> camera-space position.
    const double x = c.t_cam[0], y = c.t_cam[1], z = c.t_cam[2];
    const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
    Vec3 g_t;
    g_t[0] = cam.fx * iz * g.mean_x - cam.fx * iz2 * g_j(0, 2);
    g_t[1] = cam.fy * iz * g.mean_y - cam.fy * iz2 * g_j(1, 2);
    g_t[2] = -cam.fx * x * iz2 * g.mean_x - cam.fy * y * iz2 * g.mean_y -
             cam.fx * iz2 * g_j(0, 0) - cam.fy * iz2 * g_j(1, 1) +
             2.0 * cam.fx * x * iz3 * g_j(0, 2) + 2.0 * cam.fy * y * iz3 * g_j(1, 2);
    Vec3 g_mu = w_rot.transpose() * g_t;

    // Color features.
    if (r.color_dim == 3) {
      for (int ch = 0; ch < 3; ++ch) out.params.color[3 * row + ch] = g.rgb[ch];
    } else {
      const double dx = c.view_dir[0], dy = c.view_dir[1], dz = c.view_dir[2];
      double* gf = &out.params.color[r.color_dim * row];
      const double* f = c.sh_rest;
      Vec3 g_dir = Vec3::Zero();
      for (int ch = 0; ch < 3; ++ch) {
        gf[ch] = kShC0 * g.rgb[ch];
        gf[3 + ch] = -kShC1 * dy * g.rgb[ch];
        gf[6 + ch] = kShC1 * dz * g.rgb[ch];
        gf[9 + ch] = -kShC1 * dx * g.rgb[ch];
        g_dir[0] -= kShC1 * f[6 + ch] * g.rgb[ch];
        g_dir[1] -= kShC1 * f[ch] * g.rgb[ch];
        g_dir[2] += kShC1 * f[3 + ch] * g.rgb[ch];
      }
      g_mu += (g_dir - c.view_dir * c.view_dir.dot(g_dir)) / c.view_dist;
    }

    for (int k = 0; k < 3; ++k) out.params.mu[3 * row + k] = g_mu[k];
    const double ndc_x = g.mean_x * 0.5 * cam.width;
    const double ndc_y = g.mean_y * 0.5 * cam.height;
    out.mean2d_grad_norm[row] = std::sqrt(ndc_x * ndc_x + ndc_y * ndc_y);
  }
  return out;
}

}  // namespace degs
