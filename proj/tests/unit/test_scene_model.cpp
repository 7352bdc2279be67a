// SPDX-License-Identifier: Apache-2.0
#include "degs/scene_model.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

namespace degs {
namespace {

template <class F>
ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no degs::Error thrown";
  return ErrorKind::usage;
}

TEST(Activation, MapsRawValuesIntoValidRanges) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    const Vec3 s(g(rng), g(rng), g(rng));
    const Vec4 q(g(rng), g(rng), g(rng), g(rng));
    const double o = g(rng);
    const auto a = activate_parameters(s, q, o);
    EXPECT_TRUE((a.scale.array() > 0.0).all());
    EXPECT_NEAR(a.rotation.norm(), 1.0, 1e-14);
    EXPECT_GT(a.opacity, 0.0);
    EXPECT_LT(a.opacity, 1.0);
    EXPECT_DOUBLE_EQ(a.opacity, 1.0 / (1.0 + std::exp(-o)));
  }
}

TEST(Activation, RejectsZeroQuaternionAndNonFinite) {
  EXPECT_EQ(error_kind_of([] { activate_parameters(Vec3::Zero(), Vec4::Zero(), 0.0); }),
            ErrorKind::invalid_parameter);
  EXPECT_EQ(error_kind_of([] { activate_parameters(Vec3(NAN, 0, 0), Vec4(1, 0, 0, 0), 0.0); }),
            ErrorKind::invalid_parameter);
  EXPECT_EQ(error_kind_of([] { activate_parameters(Vec3::Zero(), Vec4(1, 0, 0, 0), INFINITY); }),
            ErrorKind::invalid_parameter);
}

TEST(Rotation, MatchesElementwiseFormulaAndIsOrthonormal) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int k = 0; k < 50; ++k) {
    Vec4 q(g(rng), g(rng), g(rng), g(rng));
    q.normalize();
    const Mat3 r = rotation_matrix(q);
    double ref[3][3];
    const double raw[4] = {q[0], q[1], q[2], q[3]};
    oracle::quat_to_matrix(raw, ref);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) EXPECT_NEAR(r(a, b), ref[a][b], 1e-15);
    }
    EXPECT_TRUE((r * r.transpose()).isApprox(Mat3::Identity(), 1e-13));
    EXPECT_NEAR(r.determinant(), 1.0, 1e-13);
  }
}

TEST(Rotation, VjpMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const Vec4 q(g(rng), g(rng), g(rng), g(rng));
  Mat3 w;
  for (int i = 0; i < 9; ++i) w.data()[i] = g(rng);
  const Vec4 analytic = rotation_matrix_vjp(q, w);
  const double h = 1e-6;
  for (int k = 0; k < 4; ++k) {
    Vec4 qp = q, qm = q;
    qp[k] += h;
    qm[k] -= h;
    const double fd = ((rotation_matrix(qp).cwiseProduct(w)).sum() -
                       (rotation_matrix(qm).cwiseProduct(w)).sum()) / (2 * h);
    EXPECT_NEAR(analytic[k], fd, 1e-7);
  }
}

TEST(Covariance, EqualsRSSRtAndIsPositiveDefinite) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int k = 0; k < 50; ++k) {
    Vec4 q(g(rng), g(rng), g(rng), g(rng));
    q.normalize();
    const Vec3 s = Vec3(g(rng), g(rng), g(rng)).array().exp().matrix();
    const Mat3 cov = build_covariance(s, q);
    double rot[3][3];
    const double raw[4] = {q[0], q[1], q[2], q[3]};
    oracle::quat_to_matrix(raw, rot);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        double ref = 0.0;
        for (int c = 0; c < 3; ++c) ref += rot[a][c] * s[c] * s[c] * rot[b][c];
        EXPECT_NEAR(cov(a, b), ref, 1e-12 * (1.0 + std::abs(ref)));
      }
    }
    EXPECT_EQ(cov, cov.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Density, UnitAtCentreAndGaussianFalloff) {
  GaussianPrimitive p;
  p.mu = Vec3(0.3, -0.2, 1.0);
  EXPECT_DOUBLE_EQ(evaluate_density(p, p.mu), 1.0);
  EXPECT_NEAR(evaluate_density(p, p.mu + Vec3(1, 0, 0)), std::exp(-0.5), 1e-15);
  p.raw_scale = Vec3(std::log(2.0), 0.0, 0.0);
  EXPECT_NEAR(evaluate_density(p, p.mu + Vec3(2, 0, 0)), std::exp(-0.5), 1e-15);
}

TEST(Density, NearSingularCovarianceIsRegularized) {
  GaussianPrimitive p;
  p.raw_scale = Vec3(0.0, 0.0, std::log(1e-9));
  const double v = evaluate_density(p, Vec3(0.0, 0.0, 1e-5));
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 1.0);
}

TEST(Cloud, RejectsUnsupportedColorWidth) {
  EXPECT_EQ(error_kind_of([] { PrimitiveCloud c(Branch::face, Aabb{}, 0, 5); }),
            ErrorKind::configuration);
}

TEST(Cloud, PushSetAndSelectKeepRows) {
  std::mt19937_64 rng(5);
  const PrimitiveCloud c = oracle::random_visible_cloud(rng, 6, 4);
  ASSERT_EQ(c.size(), 6u);
  const PrimitiveCloud s = c.select({4, 1, 1});
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.primitive(0).mu, c.primitive(4).mu);
  EXPECT_EQ(s.primitive(1).embedding, c.primitive(1).embedding);
  EXPECT_EQ(s.primitive(2).color_feature, c.primitive(1).color_feature);

  GaussianPrimitive bad = c.primitive(0);
  bad.embedding.pop_back();
  PrimitiveCloud copy = c;
  EXPECT_EQ(error_kind_of([&] { copy.set_primitive(0, bad); }), ErrorKind::dimension_mismatch);
}

TEST(NearestNeighbor, HandComputedLine) {
  const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0)};
  EXPECT_DOUBLE_EQ(mean_nearest_neighbor_distance(pts), (1.0 + 1.0 + 2.0) / 3.0);
  EXPECT_EQ(mean_nearest_neighbor_distance({Vec3::Zero()}), 0.0);
}

TEST(RandomInit, InsideBoundsWithNearestNeighborScale) {
  const Aabb box{Vec3(-1, -0.5, 0), Vec3(1, 0.5, 0.3)};
  RandomCloudOptions opt;
  opt.embedding_dim = 8;
  opt.initial_opacity = 0.1;
  const PrimitiveCloud c = init_random_cloud(300, box, 42, opt);
  ASSERT_EQ(c.size(), 300u);
  std::vector<Vec3> centers;
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_TRUE(box.contains(c.mu(i)));
    centers.push_back(c.mu(i));
  }
  // Brute-force mean nearest-neighbour distance, independent of the library helper.
  double total = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    double best = 1e300;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      if (i == j) continue;
      const Vec3 d = centers[i] - centers[j];
      best = std::min(best, std::sqrt(d.x() * d.x() + d.y() * d.y() + d.z() * d.z()));
    }
    total += best;
  }
  const double expected = std::log(total / centers.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(c.raw_scale(i)[k], expected, 1e-12);
    EXPECT_NEAR(sigmoid(c.raw_opacity(i)), 0.1, 1e-12);
    EXPECT_EQ(c.raw_rotation(i), Vec4(1, 0, 0, 0));
  }
}

TEST(RandomInit, SeedDeterminesCloud) {
  const Aabb box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  EXPECT_EQ(init_random_cloud(50, box, 7), init_random_cloud(50, box, 7));
  EXPECT_FALSE(init_random_cloud(50, box, 7) == init_random_cloud(50, box, 8));
  EXPECT_EQ(error_kind_of([&] { init_random_cloud(0, box, 1); }), ErrorKind::invalid_parameter);
}

TEST(ExportText, HexFloatsRoundTrip) {
  std::mt19937_64 rng(6);
  const PrimitiveCloud c = oracle::random_visible_cloud(rng, 3, 2);
  const std::string text = export_cloud_text(c);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  EXPECT_NE(line.find("count=3"), std::string::npos);
  std::getline(in, line);  // bounds
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_TRUE(std::getline(in, line));
    std::istringstream row(line);
    std::string tok;
    row >> tok >> tok;  // index, "mu"
    for (int k = 0; k < 3; ++k) {
      row >> tok;
      EXPECT_EQ(std::strtod(tok.c_str(), nullptr), c.mu(i)[k]);
    }
  }
}

}  // namespace
}  // namespace degs
