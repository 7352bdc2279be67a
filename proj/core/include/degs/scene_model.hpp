// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/common.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace degs {

enum class Branch : std::uint8_t { face = 0, mouth = 1 };

std::string_view to_string(Branch branch) noexcept;

/// Axis-aligned box used to normalize centers for the hash encoder.
struct Aabb {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool valid() const noexcept;
  Vec3 extent() const { return hi - lo; }
  double diagonal() const { return (hi - lo).norm(); }
  bool contains(const Vec3& p) const noexcept;
  friend bool operator==(const Aabb& a, const Aabb& b) { return a.lo == b.lo && a.hi == b.hi; }
};

/// One splat in raw (pre-activation) parameterization.
struct GaussianPrimitive {
  Vec3 mu = Vec3::Zero();
  Vec3 raw_scale = Vec3::Zero();
  Vec4 raw_rotation{1.0, 0.0, 0.0, 0.0};  // (w, x, y, z)
  double raw_opacity = 0.0;
  std::vector<double> color_feature;
  std::vector<double> embedding;
};

struct ActivatedParameters {
  Vec3 scale;
  Vec4 rotation;  // unit quaternion (w, x, y, z)
  double opacity;
};

/// exp on scale, normalization on the quaternion, logistic on opacity.
ActivatedParameters activate_parameters(const Vec3& raw_scale, const Vec4& raw_rotation,
                                        double raw_opacity);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

Mat3 rotation_matrix(const Vec4& q);

/// Reverse-mode product through rotation_matrix: returns dL/dq given dL/dR.
Vec4 rotation_matrix_vjp(const Vec4& q, const Mat3& grad_r);

/// R diag(s)^2 R^T. Throws invalid_parameter on non-finite input.
Mat3 build_covariance(const Vec3& scale, const Vec4& rotation);

/// exp(-0.5 (x-mu)^T Sigma^-1 (x-mu)) for the activated primitive.
double evaluate_density(const GaussianPrimitive& primitive, const Vec3& x);

/// Structure-of-arrays parameter storage, one row per primitive.
struct CloudTensors {
  std::vector<double> mu;            // 3 per row
  std::vector<double> raw_scale;     // 3 per row
  std::vector<double> raw_rotation;  // 4 per row
  std::vector<double> raw_opacity;   // 1 per row
  std::vector<double> color;         // Z per row
  std::vector<double> embedding;     // d per row

  void resize(std::size_t rows, std::size_t color_dim, std::size_t embedding_dim);
  void set_zero();

  friend bool operator==(const CloudTensors&, const CloudTensors&) = default;
};

class PrimitiveCloud {
 public:
  PrimitiveCloud() = default;
  PrimitiveCloud(Branch branch, const Aabb& bounds, std::size_t embedding_dim,
                 std::size_t color_dim = 3);

  std::size_t size() const noexcept { return params_.raw_opacity.size(); }
  bool empty() const noexcept { return size() == 0; }
  std::size_t embedding_dim() const noexcept { return embedding_dim_; }
  std::size_t color_dim() const noexcept { return color_dim_; }
  Branch branch() const noexcept { return branch_; }
  const Aabb& bounds() const noexcept { return bounds_; }
  void set_bounds(const Aabb& bounds) { bounds_ = bounds; }

  GaussianPrimitive primitive(std::size_t i) const;
  void set_primitive(std::size_t i, const GaussianPrimitive& p);
  void push_back(const GaussianPrimitive& p);

  Vec3 mu(std::size_t i) const { return Vec3(&params_.mu[3 * i]); }
  Vec3 raw_scale(std::size_t i) const { return Vec3(&params_.raw_scale[3 * i]); }
  Vec4 raw_rotation(std::size_t i) const { return Vec4(&params_.raw_rotation[4 * i]); }
  double raw_opacity(std::size_t i) const { return params_.raw_opacity[i]; }
  const double* color(std::size_t i) const { return &params_.color[color_dim_ * i]; }
  const double* embedding(std::size_t i) const { return params_.embedding.data() + embedding_dim_ * i; }

  CloudTensors& params() noexcept { return params_; }
  const CloudTensors& params() const noexcept { return params_; }

  /// Zero tensors shaped like this cloud (gradient buffers).
  CloudTensors zeros_like() const;

  /// New cloud holding rows[k] of this cloud at position k.
  PrimitiveCloud select(const std::vector<std::size_t>& rows) const;

  friend bool operator==(const PrimitiveCloud&, const PrimitiveCloud&);

 private:
  Branch branch_ = Branch::face;
  Aabb bounds_;
  std::size_t embedding_dim_ = 0;
  std::size_t color_dim_ = 3;
  CloudTensors params_;
};

struct RandomCloudOptions {
  std::size_t embedding_dim = 32;
  std::size_t color_dim = 3;
  Branch branch = Branch::face;
  double initial_opacity = 0.1;
  double embedding_std = 0.01;
};

/// Uniform centers in bounds, scale from mean nearest-neighbour spacing.
PrimitiveCloud init_random_cloud(std::size_t count, const Aabb& bounds, std::uint64_t seed,
                                 const RandomCloudOptions& options = {});

double mean_nearest_neighbor_distance(const std::vector<Vec3>& points);

/// Lossless text dump (hex floats), one primitive per line.
std::string export_cloud_text(const PrimitiveCloud& cloud);

}  // namespace degs
