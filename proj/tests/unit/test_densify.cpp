// SPDX-License-Identifier: Apache-2.0
#include "degs/densify.hpp"
#include "degs/pipeline.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace degs {
namespace {

GradientStats zero_stats(std::size_t n) {
  GradientStats s;
  s.reset(n);
  return s;
}

PrimitiveCloud opaque_cloud(std::mt19937_64& rng, int n) {
  PrimitiveCloud c = oracle::random_visible_cloud(rng, n, 2, 0.5, 0.9);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int k = 0; k < 3; ++k) c.params().raw_scale[3 * i + k] = std::log(0.05);
  }
  return c;
}

TEST(Densify, ZeroGradientsOnlyPruneTransparent) {
  std::mt19937_64 rng(1);
  PrimitiveCloud c = opaque_cloud(rng, 10);
  const DensifyResult same = densify_and_prune(c, zero_stats(10), DensifyConfig{}, 2.0, 1);
  EXPECT_EQ(same.cloud, c);
  EXPECT_EQ(same.pruned + same.cloned + same.split, 0u);

  c.params().raw_opacity[4] = logit(0.001);
  const DensifyResult r = densify_and_prune(c, zero_stats(10), DensifyConfig{}, 2.0, 1);
  EXPECT_EQ(r.cloud.size(), 9u);
  EXPECT_EQ(r.pruned, 1u);
  EXPECT_EQ(r.source, (std::vector<std::size_t>{0, 1, 2, 3, 5, 6, 7, 8, 9}));
  EXPECT_EQ(r.cloud.primitive(4).mu, c.primitive(5).mu);
}

TEST(Densify, OversizedSplatsArePruned) {
  std::mt19937_64 rng(2);
  PrimitiveCloud c = opaque_cloud(rng, 4);
  c.params().raw_scale[3 * 2] = std::log(0.5);
  DensifyConfig cfg;
  EXPECT_EQ(densify_and_prune(c, zero_stats(4), cfg, 2.0, 1).cloud.size(), 4u);
  cfg.max_world_size = 0.1;  // 0.5 > 0.1 * extent 2
  EXPECT_EQ(densify_and_prune(c, zero_stats(4), cfg, 2.0, 1).cloud.size(), 3u);
}

TEST(Densify, SmallHighGradientSplatIsCloned) {
  std::mt19937_64 rng(3);
  PrimitiveCloud c = opaque_cloud(rng, 3);
  for (int k = 0; k < 3; ++k) c.params().raw_scale[3 * 1 + k] = std::log(0.005);
  GradientStats s = zero_stats(3);
  s.accum[1] = 1.0;
  s.count[1] = 1;
  const DensifyResult r = densify_and_prune(c, s, DensifyConfig{}, 2.0, 7);
  EXPECT_EQ(r.cloned, 1u);
  ASSERT_EQ(r.cloud.size(), 4u);
  EXPECT_EQ(r.source.back(), 1u);
  EXPECT_EQ(r.fresh, (std::vector<std::uint8_t>{0, 0, 0, 1}));
  EXPECT_EQ(r.cloud.primitive(3).raw_scale, c.primitive(1).raw_scale);
  EXPECT_NE(r.cloud.primitive(3).mu, c.primitive(1).mu);
  EXPECT_LT((r.cloud.primitive(3).mu - c.primitive(1).mu).norm(), 0.005 * 6);
}

TEST(Densify, LargeHighGradientSplatIsSplit) {
  std::mt19937_64 rng(4);
  PrimitiveCloud c = opaque_cloud(rng, 3);
  GradientStats s = zero_stats(3);
  s.accum[0] = 1.0;
  s.count[0] = 2;
  const DensifyResult r = densify_and_prune(c, s, DensifyConfig{}, 2.0, 7);
  EXPECT_EQ(r.split, 1u);
  ASSERT_EQ(r.cloud.size(), 4u);  // parent replaced by two children
  EXPECT_EQ(r.source, (std::vector<std::size_t>{1, 2, 0, 0}));
  for (std::size_t k : {2u, 3u}) {
    for (int a = 0; a < 3; ++a) {
      EXPECT_NEAR(std::exp(r.cloud.raw_scale(k)[a]), 0.05 / 1.6, 1e-12);
    }
  }
  for (double v : r.cloud.params().mu) EXPECT_TRUE(std::isfinite(v));
}

TEST(Densify, CapDemotesLowestGradientCandidates) {
  std::mt19937_64 rng(5);
  PrimitiveCloud c = opaque_cloud(rng, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (int k = 0; k < 3; ++k) c.params().raw_scale[3 * i + k] = std::log(0.005);
  }
  GradientStats s = zero_stats(4);
  for (std::size_t i = 0; i < 4; ++i) {
    s.accum[i] = 1.0 + static_cast<double>(i);
    s.count[i] = 1;
  }
  DensifyConfig cfg;
  cfg.max_primitives = 6;
  const DensifyResult r = densify_and_prune(c, s, cfg, 2.0, 1);
  EXPECT_EQ(r.cloud.size(), 6u);
  EXPECT_EQ(r.source[4], 2u);
  EXPECT_EQ(r.source[5], 3u);
}

TEST(Densify, EmptyResultIsAnError) {
  std::mt19937_64 rng(6);
  PrimitiveCloud c = opaque_cloud(rng, 2);
  for (double& o : c.params().raw_opacity) o = -20.0;
  try {
    densify_and_prune(c, zero_stats(2), DensifyConfig{}, 2.0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
}

TEST(Densify, UnderReconstructedTargetGrowsCloud) {
  const Camera cam = oracle::test_camera(32, 32);
  const Aabb box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  PrimitiveCloud truth(Branch::face, box, 0);
  GaussianPrimitive p;
  p.raw_scale = Vec3::Constant(std::log(0.06));
  p.raw_opacity = 3.0;
  p.color_feature = {1.0, 0.8, 0.2};
  p.mu = Vec3(-0.35, 0, 0);
  truth.push_back(p);
  p.mu = Vec3(0.35, 0, 0);
  truth.push_back(p);
  const Image target = render(truth, cam, Vec3::Zero()).color;

  TrainingConfig cfg;
  cfg.embedding_dim = 0;
  const double extent = 0.5 * box.diagonal();
  BranchState b;
  b.cloud = PrimitiveCloud(Branch::face, box, 0);
  p.mu = Vec3::Zero();
  p.raw_scale = Vec3::Constant(std::log(0.3));
  p.raw_opacity = 0.0;
  p.color_feature = {0.5, 0.5, 0.5};
  b.cloud.push_back(p);
  FieldConfig fc;
  fc.layout = {0, 1, 1};
  b.field = DeformField(fc, box, 1);
  init_branch_optimizer(b, cfg.lr, extent);

  DensifyConfig dc;
  dc.interval = 100;
  dc.start_iteration = 100;
  GradientStats stats;
  stats.reset(1);
  ConditioningFrame cond;
  cond.camera = cam;
  const std::size_t initial = b.cloud.size();
  for (int it = 1; it <= 300; ++it) {
    branch_step(b, cond, target, nullptr, false, true, cfg, extent, it / 300.0, &stats, nullptr);
    if (dc.due(it)) {
      DensifyResult r = densify_and_prune(b.cloud, stats, dc, extent, static_cast<std::uint64_t>(it));
      for (const char* g : {"mu", "scale", "rotation", "opacity", "color", "embedding"}) {
        const std::string name(g);
        const std::size_t w = name == "mu" || name == "scale" ? 3 : name == "rotation" ? 4 : name == "color" ? 3 : name == "opacity" ? 1 : 0;
        b.optimizer.remap_rows(name, w, r.source, r.fresh);
      }
      b.cloud = std::move(r.cloud);
      stats.reset(b.cloud.size());
    }
  }
  EXPECT_GT(b.cloud.size(), initial);
}

}  // namespace
}  // namespace degs
