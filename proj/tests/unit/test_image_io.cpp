// SPDX-License-Identifier: Apache-2.0
#include "degs/conditioning.hpp"
#include "degs/image_io.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace degs {
namespace {

TEST(Png, SixteenBitRoundTripIsExactForQuantizedImages) {
  oracle::TempDir dir("png16");
  std::mt19937_64 rng(1);
  Image img = oracle::random_image(rng, 13, 7, 3);
  quantize_16bit(img);
  write_png(dir.path() / "a.png", img, 16);
  EXPECT_EQ(read_png(dir.path() / "a.png"), img);
}

TEST(Png, EightBitRoundsToNearestLevel) {
  oracle::TempDir dir("png8");
  Image img(2, 1, 1);
  img.pixels = {0.5, 1.7};
  write_png(dir.path() / "g.png", img, 8);
  const Image back = read_png(dir.path() / "g.png");
  ASSERT_EQ(back.channels, 1);
  EXPECT_EQ(back.pixels[0], 128.0 / 255.0);
  EXPECT_EQ(back.pixels[1], 1.0);
}

TEST(Png, MaskReadMapsNonzeroToOne) {
  oracle::TempDir dir("pngmask");
  Image img(3, 1, 1);
  img.pixels = {0.0, 0.01, 1.0};
  write_png(dir.path() / "m.png", img, 8);
  EXPECT_EQ(read_mask_png(dir.path() / "m.png").pixels, (std::vector<double>{0.0, 1.0, 1.0}));
}

TEST(Png, GarbageFileIsAnError) {
  oracle::TempDir dir("pngbad");
  std::ofstream(dir.path() / "x.png") << "not a png";
  EXPECT_THROW(read_png(dir.path() / "x.png"), Error);
  EXPECT_THROW(read_png(dir.path() / "missing.png"), Error);
  EXPECT_THROW(write_png(dir.path() / "y.png", Image(2, 2, 3), 12), Error);
}

}  // namespace
}  // namespace degs
