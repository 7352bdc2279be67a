// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/camera.hpp"
#include "degs/common.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace degs {

/// Per-block widths of the conditioning vectors, fixed for a whole sequence.
struct ConditioningLayout {
  int audio = 32;
  int id = 8;
  int shape = 8;
  int expression = 16;
  int eye = 2;
  int jaw = 1;

  /// Width of f_e = [psi_id, psi_s, psi_exp, psi_eye]; psi_jaw is not part of it.
  int expression_feature_width() const noexcept { return id + shape + expression + eye; }
  void validate() const;
  friend bool operator==(const ConditioningLayout&, const ConditioningLayout&) = default;
};

struct ConditioningFrame {
  std::vector<double> audio;  // f_a
  std::vector<double> psi_id;
  std::vector<double> psi_shape;
  std::vector<double> psi_expression;
  std::vector<double> psi_eye;
  std::vector<double> psi_jaw;
  Camera camera;
  int frame_index = 0;

  /// f_e = psi_id ++ psi_s ++ psi_exp ++ psi_eye.
  std::vector<double> expression_features() const;

  /// Throws dimension_mismatch naming the offending block.
  void check_layout(const ConditioningLayout& layout) const;

  static ConditioningFrame zeros(const ConditioningLayout& layout, const Camera& camera,
                                 int frame_index = 0);

  friend bool operator==(const ConditioningFrame&, const ConditioningFrame&) = default;
};

struct FrameMasks {
  Mask face;
  Mask mouth;
  Mask hair;
  Mask jaw;
  friend bool operator==(const FrameMasks&, const FrameMasks&) = default;
};

struct FrameRecord {
  Image image;  // H x W x 3
  FrameMasks masks;
  ConditioningFrame conditioning;
  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct DatasetManifest {
  int format_version = 1;
  int width = 0;
  int height = 0;
  int frame_count = 0;
  ConditioningLayout layout;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Loaded sequence. frames[i].conditioning.frame_index == i.
struct Dataset {
  DatasetManifest manifest;
  std::vector<FrameRecord> frames;

  const FrameRecord& frame(int index) const { return frames.at(static_cast<std::size_t>(index)); }
  std::size_t size() const noexcept { return frames.size(); }
};

/// Reads the documented on-disk layout; throws a load error listing every
/// schema violation found.
Dataset load_sequence(const std::filesystem::path& dataset_path);

/// Writes the layout read by load_sequence. Frames are stored as 16-bit PNG,
/// so callers wanting a lossless round trip must pass quantized images.
void write_sequence(const Dataset& dataset, const std::filesystem::path& dataset_path);

/// Rounds to the nearest 16-bit level (v = k / 65535).
void quantize_16bit(Image& image);

}  // namespace degs
