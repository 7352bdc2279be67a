// SPDX-License-Identifier: Apache-2.0
#include "degs/compositor.hpp"
#include "degs/deform_field.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace degs {
namespace {

FieldConfig small_field(int d = 4, int audio = 3, int expr = 5) {
  FieldConfig c;
  c.encoder.levels = 3;
  c.encoder.log2_table_size = 10;
  c.encoder.min_resolution = 4;
  c.encoder.max_resolution = 32;
  c.mlp = MlpConfig{16, 2};
  c.layout = {d, audio, expr};
  return c;
}

ConditioningLayout cond_layout() {
  ConditioningLayout l;
  l.audio = 3;
  l.id = 2;
  l.shape = 1;
  l.expression = 1;
  l.eye = 1;
  l.jaw = 1;
  return l;
}

ConditioningFrame random_frame(std::mt19937_64& rng, const Camera& cam) {
  std::normal_distribution<double> g;
  ConditioningFrame f = ConditioningFrame::zeros(cond_layout(), cam);
  for (auto* v : {&f.audio, &f.psi_id, &f.psi_shape, &f.psi_expression, &f.psi_eye, &f.psi_jaw}) {
    for (auto& x : *v) x = g(rng);
  }
  return f;
}

void randomize_mlp(DeformField& f, std::uint64_t seed, double sd = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  for (auto& l : f.mlp().layers()) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = g(rng);
  }
}

TEST(DeformField, ZeroInitializedFieldLeavesRendersBitIdentical) {
  std::mt19937_64 rng(1);
  const Camera cam = oracle::test_camera(32, 32);
  const PrimitiveCloud cloud = oracle::random_visible_cloud(rng, 40, 4);
  const DeformField field(small_field(), cloud.bounds(), 2);
  const RenderOutput canonical = render(cloud, cam, Vec3::Zero());
  for (int k = 0; k < 10; ++k) {
    const ConditioningFrame f = random_frame(rng, cam);
    const BranchPass pass = render_branch({&cloud, &field}, f);
    EXPECT_EQ(pass.deformed, cloud);
    EXPECT_EQ(pass.render.color, canonical.color);
    EXPECT_EQ(pass.render.opacity, canonical.opacity);
  }
}

TEST(DeformField, InputIsEncodingThenEmbeddingThenConditioning) {
  const DeformField field(small_field(4, 3, 5), Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)}, 3);
  EXPECT_EQ(field.input_width(), field.encoder().output_width() + 4 + 3 + 5);
}

TEST(DeformField, CoLocatedPrimitivesWithDistinctEmbeddingsDiffer) {
  DeformField field(small_field(), Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)}, 4);
  randomize_mlp(field, 5);
  const std::vector<double> a{1, 0, 0, 0}, b{0, 0, 0, 1}, audio{0.1, 0.2, 0.3}, expr(5, 0.5);
  const Vec3 mu(0.1, 0.2, 0.3);
  const auto da = predict_deformation(mu, a, audio, expr, field);
  const auto db = predict_deformation(mu, b, audio, expr, field);
  const auto da2 = predict_deformation(mu, a, audio, expr, field);
  EXPECT_GT((da.d_mu - db.d_mu).norm(), 1e-6);
  EXPECT_EQ(da.d_mu, da2.d_mu);
}

TEST(DeformField, BatchMatchesSingleQueries) {
  std::mt19937_64 rng(6);
  const PrimitiveCloud cloud = oracle::random_visible_cloud(rng, 7, 4);
  DeformField field(small_field(), cloud.bounds(), 7);
  randomize_mlp(field, 8);
  const std::vector<double> audio{0.3, -0.1, 0.7}, expr{1, 2, 3, 4, 5};
  const FieldForward ff = predict_batch(field, cloud, audio, expr);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.primitive(i);
    const auto d = predict_deformation(p.mu, p.embedding, audio, expr, field);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(ff.deltas(k, static_cast<Eigen::Index>(i)), d.d_mu[k], 1e-14);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(ff.deltas(6 + k, static_cast<Eigen::Index>(i)), d.d_rot[k], 1e-14);
  }
}

TEST(DeformField, WidthMismatchIsRejected) {
  const DeformField field(small_field(), Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)}, 9);
  const std::vector<double> z(4), audio(2), expr(5);
  try {
    predict_deformation(Vec3::Zero(), z, audio, expr, field);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::configuration);
    EXPECT_NE(std::string(e.what()).find("audio"), std::string::npos);
  }
}

TEST(DeformField, AdditiveDeltasAndDegenerateRotation) {
  GaussianPrimitive p;
  p.mu = Vec3(1, 2, 3);
  p.raw_scale = Vec3(0.1, 0.2, 0.3);
  p.raw_rotation = Vec4(1, 0, 0, 0);
  p.raw_opacity = 0.4;
  p.color_feature = {0.1, 0.2, 0.3};
  DeformationDelta d;
  d.d_mu = Vec3(0.5, 0, -1);
  d.d_scale = Vec3(-0.1, 0, 0);
  d.d_rot = Vec4(0, 1, 0, 0);
  const auto q = apply_deformation(p, d);
  EXPECT_EQ(q.mu, Vec3(1.5, 2, 2));
  EXPECT_EQ(q.raw_scale, Vec3(0.0, 0.2, 0.3));
  EXPECT_EQ(q.raw_rotation, Vec4(1, 1, 0, 0));
  EXPECT_EQ(q.raw_opacity, 0.4);
  EXPECT_EQ(q.color_feature, p.color_feature);
  d.d_rot = Vec4(-1, 0, 0, 0);
  try {
    apply_deformation(p, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_parameter);
  }
}

TEST(DeformField, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  PrimitiveCloud cloud = oracle::random_visible_cloud(rng, 3, 4);
  DeformField field(small_field(), cloud.bounds(), 11);
  randomize_mlp(field, 12);
  field.encoder().init_uniform(13, 0.5);
  std::vector<double> audio{0.3, -0.1, 0.7}, expr{1, 2, 3, 4, 5};
  std::normal_distribution<double> g;
  Eigen::MatrixXd w(kDeltaWidth, 3);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);
  auto loss = [&]() { return (predict_batch(field, cloud, audio, expr).deltas.array() * w.array()).sum(); };
  const FieldForward ff = predict_batch(field, cloud, audio, expr);
  const FieldGradients grads = field_backward(field, ff, w);
  const double h = 1e-6;
  auto fd = [&](double& x) {
    const double keep = x;
    x = keep + h;
    const double p = loss();
    x = keep - h;
    const double q = loss();
    x = keep;
    return (p - q) / (2 * h);
  };
  for (std::size_t i = 0; i < cloud.params().embedding.size(); ++i) {
    EXPECT_NEAR(grads.embedding[i], fd(cloud.params().embedding[i]), 1e-7);
  }
  for (std::size_t i = 0; i < audio.size(); ++i) EXPECT_NEAR(grads.audio[i], fd(audio[i]), 1e-7);
  for (std::size_t i = 0; i < expr.size(); ++i) EXPECT_NEAR(grads.expression[i], fd(expr[i]), 1e-7);
  for (std::size_t i = 0; i < cloud.params().mu.size(); ++i) {
    EXPECT_NEAR(grads.mu[i], fd(cloud.params().mu[i]), 1e-5);
  }
}

}  // namespace
}  // namespace degs
