// SPDX-License-Identifier: Apache-2.0
#include "degs/compositor.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace degs {
namespace {

PortraitLayers random_layers(std::mt19937_64& rng, int w, int h) {
  PortraitLayers l;
  const Mask hair = oracle::random_mask(rng, w, h, 0.3);
  l.hair_color = oracle::random_image(rng, w, h, 3);
  for (std::size_t p = 0; p < hair.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) l.hair_color.pixels[3 * p + c] *= hair.pixels[p];
  }
  l.face_color = oracle::random_image(rng, w, h, 3);
  l.face_opacity = oracle::random_image(rng, w, h, 1);
  l.mouth_color = oracle::random_image(rng, w, h, 3);
  return l;
}

double brute_fuse(const PortraitLayers& l, int x, int y, int c) {
  const double o = l.face_opacity.at(x, y);
  return l.hair_color.at(x, y, c) + l.face_color.at(x, y, c) * o + l.mouth_color.at(x, y, c) * (1.0 - o);
}

// Disk dilation by direct neighbourhood search.
Mask brute_dilate(const Mask& m, int r) {
  Mask out(m.width, m.height, 1);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      for (int sy = 0; sy < m.height; ++sy) {
        for (int sx = 0; sx < m.width; ++sx) {
          if (m.at(sx, sy) != 0.0 && (sx - x) * (sx - x) + (sy - y) * (sy - y) <= r * r) out.at(x, y) = 1.0;
        }
      }
    }
  }
  return out;
}

TEST(Dilate, RadiusZeroIsIdentity) {
  std::mt19937_64 rng(1);
  const Mask m = oracle::random_mask(rng, 32, 32, 0.2);
  EXPECT_EQ(dilate_mask(m, 0), m);
}

TEST(Dilate, SinglePixelRadiusOneIsPlus) {
  Mask m(5, 5, 1);
  m.at(2, 2) = 1.0;
  const Mask d = dilate_mask(m, 1);
  EXPECT_EQ(mask_count(d), 5u);
  for (auto [x, y] : {std::pair{2, 2}, {1, 2}, {3, 2}, {2, 1}, {2, 3}}) EXPECT_EQ(d.at(x, y), 1.0);
}

TEST(Dilate, MatchesBruteForceAndComposes) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 6; ++k) {
    const Mask m = oracle::random_mask(rng, 32, 32, 0.02);
    for (int r1 = 0; r1 <= 3; ++r1) {
      const Mask d1 = dilate_mask(m, r1);
      EXPECT_EQ(d1, brute_dilate(m, r1));
      for (int r2 = 0; r2 <= 3; ++r2) {
        const Mask both = dilate_mask(d1, r2);
        const Mask single = dilate_mask(m, std::max(r1, r2));
        for (std::size_t p = 0; p < both.size(); ++p) {
          EXPECT_GE(both.pixels[p], single.pixels[p]);
          EXPECT_GE(both.pixels[p], m.pixels[p]);
        }
      }
    }
  }
}

TEST(Dilate, RejectsNegativeRadius) { EXPECT_THROW(dilate_mask(Mask(3, 3, 1), -1), Error); }

TEST(HairLayer, IsFrameInsideMaskAndZeroOutside) {
  std::mt19937_64 rng(3);
  const Image frame = oracle::random_image(rng, 12, 10, 3);
  const Mask hair = oracle::random_mask(rng, 12, 10);
  const Image h = extract_hair_layer(frame, hair);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 12; ++x) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(h.at(x, y, c), hair.at(x, y) != 0.0 ? frame.at(x, y, c) : 0.0);
      }
    }
  }
  EXPECT_THROW(extract_hair_layer(frame, Mask(3, 3, 1)), Error);
}

TEST(Fuse, MatchesBruteForceLoop) {
  std::mt19937_64 rng(4);
  for (int set = 0; set < 100; ++set) {
    const PortraitLayers l = random_layers(rng, 9, 7);
    const Image f = fuse_unclamped(l);
    const Image fc = fuse(l);
    for (int y = 0; y < 7; ++y) {
      for (int x = 0; x < 9; ++x) {
        for (int c = 0; c < 3; ++c) {
          const double ref = brute_fuse(l, x, y, c);
          EXPECT_NEAR(f.at(x, y, c), ref, 1e-7);
          EXPECT_NEAR(fc.at(x, y, c), std::clamp(ref, 0.0, 1.0), 1e-7);
        }
      }
    }
  }
}

TEST(Fuse, CollapseIdentitiesHoldExactly) {
  std::mt19937_64 rng(5);
  PortraitLayers l = random_layers(rng, 8, 8);
  l.hair_color = Image(8, 8, 3);
  l.face_opacity = Image(8, 8, 1, 1.0);
  EXPECT_EQ(fuse_unclamped(l), l.face_color);
  l.face_opacity = Image(8, 8, 1, 0.0);
  EXPECT_EQ(fuse_unclamped(l), l.mouth_color);
}

TEST(Fuse, LinearInEachColorLayer) {
  std::mt19937_64 rng(6);
  PortraitLayers a = random_layers(rng, 6, 6), b = a;
  b.face_color = oracle::random_image(rng, 6, 6, 3);
  PortraitLayers sum = a;
  for (std::size_t i = 0; i < sum.face_color.size(); ++i) {
    sum.face_color.pixels[i] = a.face_color.pixels[i] + b.face_color.pixels[i];
  }
  PortraitLayers zero = a;
  zero.face_color = Image(6, 6, 3);
  const Image fs = fuse_unclamped(sum), fa = fuse_unclamped(a), fb = fuse_unclamped(b), fz = fuse_unclamped(zero);
  for (std::size_t i = 0; i < fs.size(); ++i) {
    EXPECT_NEAR(fs.pixels[i], fa.pixels[i] + fb.pixels[i] - fz.pixels[i], 1e-12);
  }
}

TEST(Fuse, HairPassesThroughWhereBranchesVanish) {
  std::mt19937_64 rng(7);
  PortraitLayers l = random_layers(rng, 10, 10);
  l.face_opacity = Image(10, 10, 1);
  l.mouth_color = Image(10, 10, 3);
  FuseStats st;
  EXPECT_EQ(fuse(l, &st), l.hair_color);
  EXPECT_EQ(st.clamped_values, 0u);
  EXPECT_EQ(st.overlap_energy, 0.0);
}

TEST(Fuse, ClampIsReportedAsOverlapEnergy) {
  PortraitLayers l;
  l.hair_color = Image(1, 1, 3, 0.8);
  l.face_color = Image(1, 1, 3, 0.9);
  l.face_opacity = Image(1, 1, 1, 1.0);
  l.mouth_color = Image(1, 1, 3, 0.0);
  FuseStats st;
  const Image f = fuse(l, &st);
  EXPECT_EQ(f.pixels, (std::vector<double>{1.0, 1.0, 1.0}));
  EXPECT_EQ(st.clamped_values, 3u);
  EXPECT_NEAR(st.overlap_energy, 3 * 0.7, 1e-12);
}

TEST(Fuse, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  PortraitLayers l = random_layers(rng, 5, 4);
  for (double& v : l.hair_color.pixels) v *= 0.2;
  const Image w = oracle::random_image(rng, 5, 4, 3, -1, 1);
  auto loss = [&]() {
    const Image f = fuse(l);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += w.pixels[i] * f.pixels[i];
    return s;
  };
  const FuseGradients g = fuse_backward(l, w);
  const double h = 1e-7;
  auto check = [&](Image& layer, const Image& grad) {
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const double keep = layer.pixels[i];
      layer.pixels[i] = keep + h;
      const double p = loss();
      layer.pixels[i] = keep - h;
      const double q = loss();
      layer.pixels[i] = keep;
      EXPECT_NEAR(grad.pixels[i], (p - q) / (2 * h), 1e-6);
    }
  };
  check(l.face_color, g.face_color);
  check(l.face_opacity, g.face_opacity);
  check(l.mouth_color, g.mouth_color);
}

TEST(Fuse, ResolutionMismatchIsRejected) {
  std::mt19937_64 rng(9);
  PortraitLayers l = random_layers(rng, 5, 5);
  l.mouth_color = Image(4, 5, 3);
  EXPECT_THROW(fuse(l), Error);
}

TEST(Portrait, ZeroOpacityCloudsReturnClampedHair) {
  std::mt19937_64 rng(10);
  const Camera cam = oracle::test_camera(20, 20);
  PrimitiveCloud face = oracle::random_visible_cloud(rng, 10);
  PrimitiveCloud mouth = oracle::random_visible_cloud(rng, 10);
  for (auto* c : {&face, &mouth}) {
    for (double& o : c->params().raw_opacity) o = -1e3;
  }
  const Image src = oracle::random_image(rng, 20, 20, 3);
  const Mask hair = oracle::random_mask(rng, 20, 20);
  ConditioningLayout layout;
  const auto cond = ConditioningFrame::zeros(layout, cam);
  const PortraitRender r = render_portrait({&face, nullptr}, {&mouth, nullptr}, cond, src, hair);
  EXPECT_EQ(r.image, extract_hair_layer(src, hair));
}

}  // namespace
}  // namespace degs
