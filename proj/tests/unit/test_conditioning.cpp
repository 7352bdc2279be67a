// SPDX-License-Identifier: Apache-2.0
#include "degs/conditioning.hpp"
#include "degs/synth.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace degs {
namespace {

namespace fs = std::filesystem;

SynthSpec tiny_spec() {
  SynthSpec s;
  s.width = 24;
  s.height = 20;
  s.frames = 3;
  s.face_splats = 60;
  s.mouth_splats = 20;
  return s;
}

std::string load_error(const fs::path& p) {
  try {
    load_sequence(p);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::load);
    return e.what();
  }
  ADD_FAILURE() << "load_sequence accepted a broken dataset";
  return {};
}

TEST(Conditioning, ExpressionFeaturesConcatenateInOrder) {
  ConditioningFrame f;
  f.psi_id = {1, 2};
  f.psi_shape = {3};
  f.psi_expression = {4, 5};
  f.psi_eye = {6};
  f.psi_jaw = {7};
  EXPECT_EQ(f.expression_features(), (std::vector<double>{1, 2, 3, 4, 5, 6}));
}

TEST(Conditioning, LayoutCheckNamesTheBlock) {
  ConditioningLayout l;
  ConditioningFrame f = ConditioningFrame::zeros(l, Camera{});
  EXPECT_NO_THROW(f.check_layout(l));
  f.psi_eye.push_back(0.0);
  try {
    f.check_layout(l);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension_mismatch);
    EXPECT_NE(std::string(e.what()).find("psi_eye"), std::string::npos);
  }
}

TEST(Conditioning, Quantize16IsIdempotent) {
  std::mt19937_64 rng(1);
  Image img = oracle::random_image(rng, 5, 5, 3);
  quantize_16bit(img);
  for (double v : img.pixels) EXPECT_EQ(v * 65535.0, std::round(v * 65535.0));
  Image again = img;
  quantize_16bit(again);
  EXPECT_EQ(img, again);
}

TEST(Dataset, WriteThenLoadIsLossless) {
  oracle::TempDir dir("cond_rt");
  const SynthScene scene = synth_sequence(tiny_spec(), 5);
  write_sequence(scene.dataset, dir.path());
  for (const char* f : {"manifest.json", "coeffs.jsonl", "cameras.json", "audio_feats.bin",
                        "frames/000000.png", "masks/hair/000002.png", "masks/jaw/000001.png"}) {
    EXPECT_TRUE(fs::exists(dir.path() / f)) << f;
  }
  const Dataset loaded = load_sequence(dir.path());
  EXPECT_EQ(loaded.manifest, scene.dataset.manifest);
  ASSERT_EQ(loaded.size(), scene.dataset.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded.frames[i].image, scene.dataset.frames[i].image) << i;
    EXPECT_EQ(loaded.frames[i].masks, scene.dataset.frames[i].masks) << i;
    EXPECT_EQ(loaded.frames[i].conditioning, scene.dataset.frames[i].conditioning) << i;
  }
}

TEST(Dataset, MissingHairMaskNamesTheFrame) {
  oracle::TempDir dir("cond_hair");
  write_sequence(synth_sequence(tiny_spec(), 6).dataset, dir.path());
  fs::remove(dir.path() / "masks/hair/000001.png");
  const std::string msg = load_error(dir.path());
  EXPECT_NE(msg.find("frame 1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("hair"), std::string::npos) << msg;
}

TEST(Dataset, ReportsEveryViolation) {
  oracle::TempDir dir("cond_multi");
  write_sequence(synth_sequence(tiny_spec(), 7).dataset, dir.path());
  fs::remove(dir.path() / "masks/face/000000.png");
  fs::remove(dir.path() / "audio_feats.bin");
  {
    std::ofstream out(dir.path() / "cameras.json", std::ios::trunc);
    out << "[]";
  }
  const std::string msg = load_error(dir.path());
  EXPECT_NE(msg.find("face mask"), std::string::npos) << msg;
  EXPECT_NE(msg.find("audio_feats.bin"), std::string::npos) << msg;
  EXPECT_NE(msg.find("cameras.json"), std::string::npos) << msg;
}

TEST(Dataset, RaggedCoefficientRowIsRejected) {
  oracle::TempDir dir("cond_ragged");
  write_sequence(synth_sequence(tiny_spec(), 8).dataset, dir.path());
  std::ifstream in(dir.path() / "coeffs.jsonl");
  std::string first, rest, line;
  std::getline(in, first);
  while (std::getline(in, line)) rest += line + "\n";
  in.close();
  const auto pos = first.find("\"psi_eye\":[");
  ASSERT_NE(pos, std::string::npos);
  first.insert(pos + 11, "0.5,");
  std::ofstream(dir.path() / "coeffs.jsonl", std::ios::trunc) << first << "\n" << rest;
  const std::string msg = load_error(dir.path());
  EXPECT_NE(msg.find("psi_eye"), std::string::npos) << msg;
}

TEST(Dataset, MissingDirectoryIsLoadError) {
  EXPECT_FALSE(load_error("/nonexistent/degs/dataset").empty());
}

}  // namespace
}  // namespace degs
