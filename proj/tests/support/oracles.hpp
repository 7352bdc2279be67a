// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations used by the tests. They share no
// code with the library beyond plain data types.
#pragma once

#include "degs/camera.hpp"
#include "degs/common.hpp"
#include "degs/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace degs::oracle {

inline double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// R(q) for a unit quaternion (w, x, y, z), written out element by element.
inline void quat_to_matrix(const double q_raw[4], double r[3][3]) {
  const double n = std::sqrt(q_raw[0] * q_raw[0] + q_raw[1] * q_raw[1] + q_raw[2] * q_raw[2] + q_raw[3] * q_raw[3]);
  const double w = q_raw[0] / n, x = q_raw[1] / n, y = q_raw[2] / n, z = q_raw[3] / n;
  r[0][0] = 1 - 2 * (y * y + z * z);
  r[0][1] = 2 * (x * y - w * z);
  r[0][2] = 2 * (x * z + w * y);
  r[1][0] = 2 * (x * y + w * z);
  r[1][1] = 1 - 2 * (x * x + z * z);
  r[1][2] = 2 * (y * z - w * x);
  r[2][0] = 2 * (x * z - w * y);
  r[2][1] = 2 * (y * z + w * x);
  r[2][2] = 1 - 2 * (x * x + y * y);
}

struct NaiveSplat {
  double mx, my, depth;
  double ia, ib, ic;  // inverse 2D covariance
  double alpha;
  double rgb[3];
  std::size_t index;
};

/// Projection of every visible primitive with explicit loops.
inline std::vector<NaiveSplat> naive_project(const PrimitiveCloud& cloud, const Camera& cam,
                                             double cov_floor = 0.3, double cull_sigma = 3.0) {
  std::vector<NaiveSplat> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const GaussianPrimitive p = cloud.primitive(i);
    double t[3];
    for (int r = 0; r < 3; ++r) {
      t[r] = cam.translation[r];
      for (int k = 0; k < 3; ++k) t[r] += cam.rotation(r, k) * p.mu[k];
    }
    if (!(t[2] > cam.near && t[2] < cam.far)) continue;
    double q[4] = {p.raw_rotation[0], p.raw_rotation[1], p.raw_rotation[2], p.raw_rotation[3]};
    double rot[3][3];
    quat_to_matrix(q, rot);
    double sigma[3][3] = {};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int k = 0; k < 3; ++k) {
          const double s = std::exp(p.raw_scale[k]);
          sigma[a][b] += rot[a][k] * s * s * rot[b][k];
        }
      }
    }
    // J W (2x3).
    const double z = t[2];
    const double j[2][3] = {{cam.fx / z, 0.0, -cam.fx * t[0] / (z * z)},
                            {0.0, cam.fy / z, -cam.fy * t[1] / (z * z)}};
    double jw[2][3] = {};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int k = 0; k < 3; ++k) jw[a][b] += j[a][k] * cam.rotation(k, b);
      }
    }
    double cov[2][2] = {};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        for (int k = 0; k < 3; ++k) {
          for (int l = 0; l < 3; ++l) cov[a][b] += jw[a][k] * sigma[k][l] * jw[b][l];
        }
      }
    }
    cov[0][0] += cov_floor;
    cov[1][1] += cov_floor;
    NaiveSplat s;
    s.mx = cam.fx * t[0] / z + cam.cx;
    s.my = cam.fy * t[1] / z + cam.cy;
    s.depth = z;
    const double sx = std::sqrt(cov[0][0]), sy = std::sqrt(cov[1][1]);
    if (s.mx + cull_sigma * sx < -0.5 || s.mx - cull_sigma * sx > cam.width - 0.5 ||
        s.my + cull_sigma * sy < -0.5 || s.my - cull_sigma * sy > cam.height - 0.5) {
      continue;
    }
    const double det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    s.ia = cov[1][1] / det;
    s.ib = -0.5 * (cov[0][1] + cov[1][0]) / det;
    s.ic = cov[0][0] / det;
    s.alpha = sigmoid_ref(p.raw_opacity);
    for (int c = 0; c < 3; ++c) s.rgb[c] = p.color_feature[static_cast<std::size_t>(c)];
    s.index = i;
    out.push_back(s);
  }
  std::stable_sort(out.begin(), out.end(), [](const NaiveSplat& a, const NaiveSplat& b) { return a.depth < b.depth; });
  return out;
}

/// Per-pixel front-to-back compositing C = sum c_i a'_i prod_{j<i} (1 - a'_j),
/// with the documented skip (a' < eps) and early stop (T < t_floor).
inline void naive_blend(const PrimitiveCloud& cloud, const Camera& cam, const Vec3& bg, Image& color,
                        Image& opacity, double eps = 1e-8, double t_floor = 1e-4) {
  const auto splats = naive_project(cloud, cam);
  color = Image(cam.width, cam.height, 3);
  opacity = Image(cam.width, cam.height, 1);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      double t = 1.0, c[3] = {0, 0, 0};
      for (const auto& s : splats) {
        if (s.alpha <= eps) continue;
        const double dx = x - s.mx, dy = y - s.my;
        const double g = std::exp(-0.5 * (s.ia * dx * dx + 2.0 * s.ib * dx * dy + s.ic * dy * dy));
        const double a = s.alpha * g;
        if (a < eps) continue;
        for (int k = 0; k < 3; ++k) c[k] += s.rgb[k] * a * t;
        t *= 1.0 - a;
        if (t < t_floor) break;
      }
      for (int k = 0; k < 3; ++k) color.at(x, y, k) = c[k] + bg[k] * t;
      opacity.at(x, y) = 1.0 - t;
    }
  }
}

/// SSIM with an explicit 11x11 Gaussian window loop (valid positions only).
inline double naive_ssim(const Image& a, const Image& b) {
  const int n = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  double w[11][11], sum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * sigma * sigma));
      sum += w[i][j];
    }
  }
  double total = 0.0;
  int count = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y = 0; y + n <= a.height; ++y) {
      for (int x = 0; x + n <= a.width; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            const double ww = w[i][j] / sum;
            const double va = a.at(x + j, y + i, c), vb = b.at(x + j, y + i, c);
            ma += ww * va;
            mb += ww * vb;
            saa += ww * va * va;
            sbb += ww * vb * vb;
            sab += ww * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return total / count;
}

inline Image random_image(std::mt19937_64& rng, int w, int h, int c, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(w, h, c);
  for (double& v : img.pixels) v = u(rng);
  return img;
}

inline Mask random_mask(std::mt19937_64& rng, int w, int h, double p = 0.5) {
  std::bernoulli_distribution b(p);
  Mask m(w, h, 1);
  for (double& v : m.pixels) v = b(rng) ? 1.0 : 0.0;
  return m;
}

/// Random cloud in front of a camera at z = -3 looking along +z.
inline PrimitiveCloud random_visible_cloud(std::mt19937_64& rng, int n, std::size_t embedding_dim = 0,
                                           double opacity_lo = 0.2, double opacity_hi = 0.9) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  PrimitiveCloud cloud(Branch::face, Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)}, embedding_dim, 3);
  for (int i = 0; i < n; ++i) {
    GaussianPrimitive p;
    p.mu = Vec3(1.2 * u(rng) - 0.6, 1.2 * u(rng) - 0.6, u(rng) - 0.5);
    for (int k = 0; k < 3; ++k) p.raw_scale[k] = std::log(0.05 + 0.2 * u(rng));
    for (int k = 0; k < 4; ++k) p.raw_rotation[k] = g(rng);
    const double a = opacity_lo + (opacity_hi - opacity_lo) * u(rng);
    p.raw_opacity = std::log(a / (1 - a));
    p.color_feature = {u(rng), u(rng), u(rng)};
    p.embedding.resize(embedding_dim);
    for (auto& z : p.embedding) z = g(rng);
    cloud.push_back(p);
  }
  return cloud;
}

inline Camera test_camera(int w = 32, int h = 32) {
  Camera c;
  c.fx = c.fy = 1.25 * w;
  c.cx = 0.5 * (w - 1);
  c.cy = 0.5 * (h - 1);
  c.width = w;
  c.height = h;
  c.translation = Vec3(0.0, 0.0, 3.0);
  return c;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("degs_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace degs::oracle
