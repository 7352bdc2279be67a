// SPDX-License-Identifier: Apache-2.0
#include "degs/deform_field.hpp"

#include <algorithm>

namespace degs {

DeformField::DeformField(const FieldConfig& config, const Aabb& bounds, std::uint64_t seed)
    : config_(config), encoder_(config.encoder, bounds) {
  const auto& l = config_.layout;
  if (l.embedding_dim < 0 || l.audio_dim < 0 || l.expression_dim < 0) {
    throw Error(ErrorKind::configuration, "field layout widths must be non-negative");
  }
  encoder_.init_uniform(derive_seed(seed, "encoder"));
  mlp_ = Mlp(input_width(), kDeltaWidth, config_.mlp, derive_seed(seed, "mlp"));
}

int DeformField::input_width() const noexcept {
  const auto& l = config_.layout;
  return encoder_.output_width() + l.embedding_dim + l.audio_dim + l.expression_dim;
}

DeformationDelta DeformationDelta::from_column(const Eigen::Ref<const Eigen::VectorXd>& c) {
  DeformationDelta d;
  d.d_mu = c.segment<3>(0);
  d.d_scale = c.segment<3>(3);
  d.d_rot = c.segment<4>(6);
  return d;
}

namespace {

void check_widths(const DeformField& field, std::size_t embedding, std::size_t audio,
                  std::size_t expression) {
  const auto& l = field.layout();
  auto mismatch = [](const char* what, std::size_t got, int want) {
    throw Error(ErrorKind::configuration, std::string(what) + " width " + std::to_string(got) +
                                              " does not match field layout " +
                                              std::to_string(want));
  };
  if (embedding != static_cast<std::size_t>(l.embedding_dim)) mismatch("embedding", embedding, l.embedding_dim);
  if (audio != static_cast<std::size_t>(l.audio_dim)) mismatch("audio feature", audio, l.audio_dim);
  if (expression != static_cast<std::size_t>(l.expression_dim)) mismatch("expression feature", expression, l.expression_dim);
}

}  // namespace

DeformationDelta predict_deformation(const Vec3& mu, std::span<const double> embedding,
                                     std::span<const double> audio,
                                     std::span<const double> expression,
                                     const DeformField& field) {
  check_widths(field, embedding.size(), audio.size(), expression.size());
  Eigen::VectorXd x(field.input_width());
  const int enc = field.encoder().output_width();
  field.encoder().encode(mu, x.data());
  std::copy(embedding.begin(), embedding.end(), x.data() + enc);
  std::copy(audio.begin(), audio.end(), x.data() + enc + embedding.size());
  std::copy(expression.begin(), expression.end(),
            x.data() + enc + embedding.size() + audio.size());
  const Eigen::MatrixXd y = field.mlp().forward(x);
  return DeformationDelta::from_column(y.col(0));
}

FieldForward predict_batch(const DeformField& field, const PrimitiveCloud& cloud,
                           std::span<const double> audio, std::span<const double> expression) {
  check_widths(field, cloud.embedding_dim(), audio.size(), expression.size());
  const auto n = static_cast<Eigen::Index>(cloud.size());
  const int enc = field.encoder().output_width();
  const std::size_t d = cloud.embedding_dim();

  FieldForward out;
  out.encode.resize(cloud.size());
  Eigen::MatrixXd x(field.input_width(), n);
  std::size_t clamped = 0;
#pragma omp parallel for schedule(static) reduction(+ : clamped)
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    double* col = x.col(i).data();
    clamped += field.encoder().encode(cloud.mu(row), col, &out.encode[row]) ? 1 : 0;
    std::copy_n(cloud.embedding(row), d, col + enc);
    std::copy(audio.begin(), audio.end(), col + enc + d);
    std::copy(expression.begin(), expression.end(), col + enc + d + audio.size());
  }
  out.clamped_queries = clamped;
  out.deltas = field.mlp().forward(x, &out.mlp);
  return out;
}

FieldGradients field_backward(const DeformField& field, const FieldForward& forward,
                              const Eigen::MatrixXd& d_deltas) {
  const auto n = forward.deltas.cols();
  if (d_deltas.rows() != kDeltaWidth || d_deltas.cols() != n) {
    throw Error(ErrorKind::invalid_input, "delta gradient shape does not match forward batch");
  }
  const auto& l = field.layout();
  const int enc = field.encoder().output_width();

  FieldGradients g;
  g.mlp = field.mlp().zero_gradients();
  const Eigen::MatrixXd d_x = field.mlp().backward(forward.mlp, d_deltas, g.mlp);

  g.tables.assign(field.encoder().tables().size(), 0.0);
  g.mu.assign(3 * static_cast<std::size_t>(n), 0.0);
  g.embedding.assign(static_cast<std::size_t>(l.embedding_dim) * n, 0.0);
  g.audio.assign(static_cast<std::size_t>(l.audio_dim), 0.0);
  g.expression.assign(static_cast<std::size_t>(l.expression_dim), 0.0);

  // Table scatter stays serial so the accumulation order is fixed.
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    const double* col = d_x.col(i).data();
    const Vec3 d_mu = field.encoder().backward(forward.encode[row], col, g.tables.data());
    for (int k = 0; k < 3; ++k) g.mu[3 * row + k] = d_mu[k];
    std::copy_n(col + enc, l.embedding_dim, g.embedding.begin() + static_cast<std::ptrdiff_t>(l.embedding_dim * row));
    for (int k = 0; k < l.audio_dim; ++k) g.audio[k] += col[enc + l.embedding_dim + k];
    for (int k = 0; k < l.expression_dim; ++k) {
      g.expression[k] += col[enc + l.embedding_dim + l.audio_dim + k];
    }
  }
  return g;
}

GaussianPrimitive apply_deformation(const GaussianPrimitive& canonical,
                                    const DeformationDelta& delta) {
  GaussianPrimitive out = canonical;
  out.mu = canonical.mu + delta.d_mu;
  out.raw_scale = canonical.raw_scale + delta.d_scale;
  out.raw_rotation = canonical.raw_rotation + delta.d_rot;
  if (!(out.raw_rotation.norm() > 0.0)) {
    throw Error(ErrorKind::invalid_parameter, "degenerate rotation: q + dq has zero norm");
  }
  return out;
}

PrimitiveCloud apply_deformation(const PrimitiveCloud& canonical, const Eigen::MatrixXd& deltas) {
  if (deltas.rows() != kDeltaWidth || deltas.cols() != static_cast<Eigen::Index>(canonical.size())) {
    throw Error(ErrorKind::invalid_input, "delta matrix does not match cloud size");
  }
  PrimitiveCloud out = canonical;
  auto& p = out.params();
  for (std::size_t i = 0; i < canonical.size(); ++i) {
    const auto c = deltas.col(static_cast<Eigen::Index>(i));
    for (int k = 0; k < 3; ++k) {
      p.mu[3 * i + k] += c[k];
      p.raw_scale[3 * i + k] += c[3 + k];
    }
    double norm2 = 0.0;
    for (int k = 0; k < 4; ++k) {
      p.raw_rotation[4 * i + k] += c[6 + k];
      norm2 += p.raw_rotation[4 * i + k] * p.raw_rotation[4 * i + k];
    }
    if (!(norm2 > 0.0)) {
      throw Error(ErrorKind::invalid_parameter,
                  "degenerate rotation: q + dq has zero norm for primitive " + std::to_string(i));
    }
  }
  return out;
}

}  // namespace degs
