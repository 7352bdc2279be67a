// SPDX-License-Identifier: Apache-2.0
#include "degs/scene_model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdio>
#include <limits>
#include <random>

namespace degs {

std::string_view to_string(Branch branch) noexcept {
  return branch == Branch::face ? "face" : "mouth";
}

bool Aabb::valid() const noexcept {
  return lo.allFinite() && hi.allFinite() && (hi.array() > lo.array()).all();
}

bool Aabb::contains(const Vec3& p) const noexcept {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

ActivatedParameters activate_parameters(const Vec3& raw_scale, const Vec4& raw_rotation,
                                        double raw_opacity) {
  if (!raw_scale.allFinite() || !raw_rotation.allFinite() || !std::isfinite(raw_opacity)) {
    throw Error(ErrorKind::invalid_parameter, "non-finite raw primitive parameter");
  }
  const double norm = raw_rotation.norm();
  if (norm == 0.0) {
    throw Error(ErrorKind::invalid_parameter, "zero-norm raw rotation");
  }
  return {raw_scale.array().exp().matrix(), raw_rotation / norm, sigmoid(raw_opacity)};
}

Mat3 rotation_matrix(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Vec4 rotation_matrix_vjp(const Vec4& q, const Mat3& g) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 d;
  d[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) +
                z * g(2, 0) + w * g(2, 1) - 2.0 * x * g(2, 2));
  d[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                w * g(2, 0) + z * g(2, 1) - 2.0 * y * g(2, 2));
  d[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) -
                2.0 * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  return d;
}

Mat3 build_covariance(const Vec3& scale, const Vec4& rotation) {
  if (!scale.allFinite() || !rotation.allFinite()) {
    throw Error(ErrorKind::invalid_parameter, "non-finite scale or rotation");
  }
  Mat3 m = rotation_matrix(rotation);
  for (int c = 0; c < 3; ++c) m.col(c) *= scale[c];
  Mat3 cov = m * m.transpose();
  // Enforce exact symmetry; the product is symmetric up to rounding.
  cov(1, 0) = cov(0, 1);
  cov(2, 0) = cov(0, 2);
  cov(2, 1) = cov(1, 2);
  return cov;
}

double evaluate_density(const GaussianPrimitive& primitive, const Vec3& x) {
  const auto act =
      activate_parameters(primitive.raw_scale, primitive.raw_rotation, primitive.raw_opacity);
  Mat3 cov = build_covariance(act.scale, act.rotation);
  const Vec3 d = x - primitive.mu;
  if (!d.allFinite()) throw Error(ErrorKind::invalid_parameter, "non-finite query point");

  constexpr double kMaxCondition = 1e12;
  constexpr double kRegularization = 1e-8;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues()[0];
  const double lmax = eig.eigenvalues()[2];
  if (!(lmin > 0.0) || lmax / lmin > kMaxCondition) {
    cov += kRegularization * Mat3::Identity();
  }
  Eigen::LLT<Mat3> llt(cov);
  if (llt.info() != Eigen::Success || !cov.allFinite()) {
    throw Error(ErrorKind::singular_covariance, "covariance is degenerate after regularization");
  }
  const double mahalanobis = d.dot(llt.solve(d));
  return std::exp(-0.5 * mahalanobis);
}

void CloudTensors::resize(std::size_t rows, std::size_t color_dim, std::size_t embedding_dim) {
  mu.resize(3 * rows);
  raw_scale.resize(3 * rows);
  raw_rotation.resize(4 * rows);
  raw_opacity.resize(rows);
  color.resize(color_dim * rows);
  embedding.resize(embedding_dim * rows);
}

void CloudTensors::set_zero() {
  for (auto* t : {&mu, &raw_scale, &raw_rotation, &raw_opacity, &color, &embedding}) {
    std::fill(t->begin(), t->end(), 0.0);
  }
}

PrimitiveCloud::PrimitiveCloud(Branch branch, const Aabb& bounds, std::size_t embedding_dim,
                               std::size_t color_dim)
    : branch_(branch), bounds_(bounds), embedding_dim_(embedding_dim), color_dim_(color_dim) {
  if (color_dim != 3 && color_dim != 12) {
    throw Error(ErrorKind::configuration,
                "color feature width must be 3 (RGB) or 12 (degree-1 SH), got " +
                    std::to_string(color_dim));
  }
}

GaussianPrimitive PrimitiveCloud::primitive(std::size_t i) const {
  GaussianPrimitive p;
  p.mu = mu(i);
  p.raw_scale = raw_scale(i);
  p.raw_rotation = raw_rotation(i);
  p.raw_opacity = raw_opacity(i);
  p.color_feature.assign(color(i), color(i) + color_dim_);
  p.embedding.assign(embedding(i), embedding(i) + embedding_dim_);
  return p;
}

void PrimitiveCloud::set_primitive(std::size_t i, const GaussianPrimitive& p) {
  if (p.color_feature.size() != color_dim_ || p.embedding.size() != embedding_dim_) {
    throw Error(ErrorKind::dimension_mismatch,
                "primitive has color/embedding width " + std::to_string(p.color_feature.size()) +
                    "/" + std::to_string(p.embedding.size()) + ", cloud expects " +
                    std::to_string(color_dim_) + "/" + std::to_string(embedding_dim_));
  }
  std::copy_n(p.mu.data(), 3, &params_.mu[3 * i]);
  std::copy_n(p.raw_scale.data(), 3, &params_.raw_scale[3 * i]);
  std::copy_n(p.raw_rotation.data(), 4, &params_.raw_rotation[4 * i]);
  params_.raw_opacity[i] = p.raw_opacity;
  std::copy(p.color_feature.begin(), p.color_feature.end(), params_.color.begin() + color_dim_ * i);
  std::copy(p.embedding.begin(), p.embedding.end(), params_.embedding.begin() + embedding_dim_ * i);
}

void PrimitiveCloud::push_back(const GaussianPrimitive& p) {
  const std::size_t n = size();
  params_.resize(n + 1, color_dim_, embedding_dim_);
  set_primitive(n, p);
}

CloudTensors PrimitiveCloud::zeros_like() const {
  CloudTensors t;
  t.resize(size(), color_dim_, embedding_dim_);
  t.set_zero();
  return t;
}

PrimitiveCloud PrimitiveCloud::select(const std::vector<std::size_t>& rows) const {
  PrimitiveCloud out(branch_, bounds_, embedding_dim_, color_dim_);
  out.params_.resize(rows.size(), color_dim_, embedding_dim_);
  auto copy_rows = [&](const std::vector<double>& src, std::vector<double>& dst, std::size_t w) {
    for (std::size_t k = 0; k < rows.size(); ++k) {
      std::copy_n(src.begin() + w * rows[k], w, dst.begin() + w * k);
    }
  };
  copy_rows(params_.mu, out.params_.mu, 3);
  copy_rows(params_.raw_scale, out.params_.raw_scale, 3);
  copy_rows(params_.raw_rotation, out.params_.raw_rotation, 4);
  copy_rows(params_.raw_opacity, out.params_.raw_opacity, 1);
  copy_rows(params_.color, out.params_.color, color_dim_);
  copy_rows(params_.embedding, out.params_.embedding, embedding_dim_);
  return out;
}

bool operator==(const PrimitiveCloud& a, const PrimitiveCloud& b) {
  return a.branch_ == b.branch_ && a.bounds_.lo == b.bounds_.lo && a.bounds_.hi == b.bounds_.hi &&
         a.embedding_dim_ == b.embedding_dim_ && a.color_dim_ == b.color_dim_ &&
         a.params_ == b.params_;
}

double mean_nearest_neighbor_distance(const std::vector<Vec3>& points) {
  if (points.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (i != j) best = std::min(best, (points[i] - points[j]).squaredNorm());
    }
    total += std::sqrt(best);
  }
  return total / static_cast<double>(points.size());
}

PrimitiveCloud init_random_cloud(std::size_t count, const Aabb& bounds, std::uint64_t seed,
                                 const RandomCloudOptions& options) {
  if (count == 0) throw Error(ErrorKind::invalid_parameter, "random cloud needs count >= 1");
  if (!bounds.valid()) throw Error(ErrorKind::invalid_parameter, "random cloud bounds are empty");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> embed(0.0, options.embedding_std);

  std::vector<Vec3> centers(count);
  for (auto& c : centers) {
    for (int a = 0; a < 3; ++a) c[a] = bounds.lo[a] + unit(rng) * (bounds.hi[a] - bounds.lo[a]);
  }

  double spacing = mean_nearest_neighbor_distance(centers);
  if (!(spacing > 0.0)) {
    // Expected nearest-neighbour distance of a Poisson process at this density.
    const Vec3 e = bounds.extent();
    spacing = 0.554 * std::cbrt(e.prod() / static_cast<double>(count));
  }
  const double raw_scale = std::log(spacing);

  PrimitiveCloud cloud(options.branch, bounds, options.embedding_dim, options.color_dim);
  constexpr double kShC0 = 0.28209479177387814;
  for (std::size_t i = 0; i < count; ++i) {
    GaussianPrimitive p;
    p.mu = centers[i];
    p.raw_scale = Vec3::Constant(raw_scale);
    p.raw_opacity = logit(options.initial_opacity);
    p.color_feature.assign(options.color_dim, 0.0);
    for (int ch = 0; ch < 3; ++ch) {
      const double c = unit(rng);
      p.color_feature[ch] = options.color_dim == 3 ? c : c / kShC0;
    }
    p.embedding.resize(options.embedding_dim);
    for (auto& z : p.embedding) z = embed(rng);
    cloud.push_back(p);
  }
  return cloud;
}

namespace {

void append_hex(std::string& out, const double* v, std::size_t n) {
  char buf[40];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), " %a", v[i]);
    out += buf;
  }
}

}  // namespace

std::string export_cloud_text(const PrimitiveCloud& cloud) {
  std::string out = "degs-cloud branch=" + std::string(to_string(cloud.branch())) +
                    " count=" + std::to_string(cloud.size()) +
                    " d=" + std::to_string(cloud.embedding_dim()) +
                    " Z=" + std::to_string(cloud.color_dim()) + "\nbounds";
  append_hex(out, cloud.bounds().lo.data(), 3);
  append_hex(out, cloud.bounds().hi.data(), 3);
  out += '\n';
  const auto& t = cloud.params();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out += std::to_string(i);
    out += " mu";
    append_hex(out, &t.mu[3 * i], 3);
    out += " scale";
    append_hex(out, &t.raw_scale[3 * i], 3);
    out += " rot";
    append_hex(out, &t.raw_rotation[4 * i], 4);
    out += " opacity";
    append_hex(out, &t.raw_opacity[i], 1);
    out += " color";
    append_hex(out, cloud.color(i), cloud.color_dim());
    out += " z";
    append_hex(out, cloud.embedding(i), cloud.embedding_dim());
    out += '\n';
  }
  return out;
}

}  // namespace degs
