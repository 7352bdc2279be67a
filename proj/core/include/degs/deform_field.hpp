// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/common.hpp"
#include "degs/hash_encoder.hpp"
#include "degs/mlp.hpp"
#include "degs/scene_model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace degs {

inline constexpr int kDeltaWidth = 10;  // d_mu(3), d_scale(3), d_rot(4)

struct FieldLayout {
  int embedding_dim = 32;
  int audio_dim = 32;
  int expression_dim = 34;
  friend bool operator==(const FieldLayout&, const FieldLayout&) = default;
};

struct FieldConfig {
  HashEncoderConfig encoder;
  MlpConfig mlp;
  FieldLayout layout;
  friend bool operator==(const FieldConfig&, const FieldConfig&) = default;
};

/// Encoder + decoder pair predicting per-primitive deformations. The MLP
/// input is [encode(mu), z, f_a, f_e]; z joins after spatial encoding.
class DeformField {
 public:
  DeformField() = default;
  DeformField(const FieldConfig& config, const Aabb& bounds, std::uint64_t seed);

  const FieldConfig& config() const noexcept { return config_; }
  const FieldLayout& layout() const noexcept { return config_.layout; }
  int input_width() const noexcept;

  TriPlaneHashEncoder& encoder() noexcept { return encoder_; }
  const TriPlaneHashEncoder& encoder() const noexcept { return encoder_; }
  Mlp& mlp() noexcept { return mlp_; }
  const Mlp& mlp() const noexcept { return mlp_; }

  friend bool operator==(const DeformField&, const DeformField&) = default;

 private:
  FieldConfig config_;
  TriPlaneHashEncoder encoder_;
  Mlp mlp_;
};

struct DeformationDelta {
  Vec3 d_mu = Vec3::Zero();
  Vec3 d_scale = Vec3::Zero();
  Vec4 d_rot = Vec4::Zero();

  static DeformationDelta from_column(const Eigen::Ref<const Eigen::VectorXd>& column);
};

DeformationDelta predict_deformation(const Vec3& mu, std::span<const double> embedding,
                                     std::span<const double> audio,
                                     std::span<const double> expression,
                                     const DeformField& field);

/// Batched forward over every primitive of a cloud, with traces for backward.
struct FieldForward {
  Eigen::MatrixXd deltas;  // kDeltaWidth x N
  std::vector<EncodeTrace> encode;
  MlpTrace mlp;
  std::size_t clamped_queries = 0;
};

FieldForward predict_batch(const DeformField& field, const PrimitiveCloud& cloud,
                           std::span<const double> audio, std::span<const double> expression);

struct FieldGradients {
  std::vector<double> tables;      // same layout as encoder tables
  std::vector<DenseLayer> mlp;     // same shape as mlp layers
  std::vector<double> mu;          // 3 per primitive
  std::vector<double> embedding;   // d per primitive
  std::vector<double> audio;       // summed over primitives
  std::vector<double> expression;  // summed over primitives
};

FieldGradients field_backward(const DeformField& field, const FieldForward& forward,
                              const Eigen::MatrixXd& d_deltas);

/// mu + d_mu, raw_scale + d_scale, raw_rotation + d_rot; opacity and color
/// pass through. The renderer normalizes the summed quaternion.
GaussianPrimitive apply_deformation(const GaussianPrimitive& canonical,
                                    const DeformationDelta& delta);

PrimitiveCloud apply_deformation(const PrimitiveCloud& canonical, const Eigen::MatrixXd& deltas);

}  // namespace degs
