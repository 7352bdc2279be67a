// SPDX-License-Identifier: Apache-2.0
#include "degs/checkpoint.hpp"

#include "oracles.hpp"
#include "tiny_setup.hpp"

#include <gtest/gtest.h>

#include <cstring>

namespace degs {
namespace {

TrainingState trained_state() {
  const SynthScene scene = synth_sequence(testing::tiny_synth_spec(2), 3);
  TrainingConfig cfg = testing::tiny_training_config(scene.bounds);
  cfg.iterations = {5, 3, 0};
  TrainingState s = initial_state(cfg, scene.dataset.manifest.layout, 9);
  run_stage(Stage::static_init, cfg, scene.dataset, s);
  run_stage(Stage::motion, cfg, scene.dataset, s);
  return s;
}

Error decode_error(const std::string& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "decode accepted bad bytes";
  return Error(ErrorKind::usage, "");
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const TrainingState s = trained_state();
  const TrainingState back = decode_checkpoint(encode_checkpoint(s));
  EXPECT_EQ(back, s);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(s));
}

TEST(Checkpoint, SaveAndLoadThroughFile) {
  oracle::TempDir dir("ckpt");
  const TrainingState s = trained_state();
  save_checkpoint(s, dir.path() / "state.degs");
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "state.degs.tmp"));
  EXPECT_EQ(load_checkpoint(dir.path() / "state.degs"), s);
  try {
    load_checkpoint(dir.path() / "missing.degs");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

TEST(Checkpoint, TruncatedFileIsFormatError) {
  const std::string bytes = encode_checkpoint(trained_state());
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_EQ(decode_error(bytes.substr(0, cut)).kind(), ErrorKind::format) << cut;
  }
}

TEST(Checkpoint, BadMagicIsFormatError) {
  std::string bytes = encode_checkpoint(trained_state());
  bytes[0] = 'X';
  EXPECT_EQ(decode_error(bytes).kind(), ErrorKind::format);
}

TEST(Checkpoint, VersionMismatchNamesBothVersions) {
  std::string bytes = encode_checkpoint(trained_state());
  const std::uint32_t v = 7;
  std::memcpy(bytes.data() + 4, &v, 4);
  const Error e = decode_error(bytes);
  EXPECT_EQ(e.kind(), ErrorKind::format);
  const std::string msg = e.what();
  EXPECT_NE(msg.find("version 7"), std::string::npos) << msg;
  EXPECT_NE(msg.find("expected 1"), std::string::npos) << msg;
}

TEST(Checkpoint, EmbeddingWidthMismatchNamesBothValues) {
  const TrainingState s = trained_state();
  TrainingConfig cfg;
  cfg.embedding_dim = 16;
  try {
    check_compatible(s, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension_mismatch);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("d=8"), std::string::npos) << msg;
    EXPECT_NE(msg.find("d=16"), std::string::npos) << msg;
  }
  cfg.embedding_dim = 8;
  EXPECT_NO_THROW(check_compatible(s, cfg));
}

TEST(Checkpoint, DescribeListsShapes) {
  const std::string text = describe_checkpoint(trained_state());
  for (const char* s : {"DEGS version 1", "face.cloud: count=", "mouth.mlp:", "stage motion: completed",
                        "stage finetune: pending"}) {
    EXPECT_NE(text.find(s), std::string::npos) << s;
  }
}

}  // namespace
}  // namespace degs
