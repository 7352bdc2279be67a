// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/common.hpp"
#include "degs/conditioning.hpp"
#include "degs/deform_field.hpp"
#include "degs/scene_model.hpp"
#include "degs/splat_renderer.hpp"

namespace degs {

/// Inputs of the hair-preserving fusion. All layers share one resolution.
struct PortraitLayers {
  Image hair_color;    // H x W x 3, zero outside the hair mask
  Image face_color;    // H x W x 3
  Image face_opacity;  // H x W x 1
  Image mouth_color;   // H x W x 3
};

/// Morphological dilation with a disk of the given radius (dx^2 + dy^2 <= r^2).
Mask dilate_mask(const Mask& mask, int radius);

/// Pixelwise product of the frame with the hair mask.
Image extract_hair_layer(const Image& frame, const Mask& hair_mask);

struct FuseStats {
  std::size_t clamped_values = 0;
  /// Sum of |pre-clamp - clamped| over all pixels and channels.
  double overlap_energy = 0.0;
};

/// C = C_hair + C_face * O_face + C_mouth * (1 - O_face), before clamping.
Image fuse_unclamped(const PortraitLayers& layers);

/// fuse_unclamped followed by a clamp to [0, 1].
Image fuse(const PortraitLayers& layers, FuseStats* stats = nullptr);

struct FuseGradients {
  Image face_color;    // H x W x 3
  Image face_opacity;  // H x W x 1
  Image mouth_color;   // H x W x 3
};

/// Gradient of a scalar loss through fuse(), including the clamp (zero
/// gradient where a value was clamped).
FuseGradients fuse_backward(const PortraitLayers& layers, const Image& grad_output);

/// One branch as seen by the portrait renderer.
struct BranchView {
  const PrimitiveCloud* cloud = nullptr;
  const DeformField* field = nullptr;  // null renders the canonical cloud
};

struct BranchPass {
  PrimitiveCloud deformed;
  FieldForward field_forward;  // empty when no field
  RenderOutput render;
};

struct PortraitRender {
  Image image;  // clamped fusion
  PortraitLayers layers;
  BranchPass face;
  BranchPass mouth;
  FuseStats stats;
};

/// Deforms and renders one branch over a black background.
BranchPass render_branch(const BranchView& branch, const ConditioningFrame& conditioning,
                         const RenderOptions& options = {});

/// Face pass (C_face, O_face), mouth pass (C_mouth), hair layer cut from
/// `hair_source` with `hair_mask`, then fusion.
PortraitRender render_portrait(const BranchView& face, const BranchView& mouth,
                               const ConditioningFrame& conditioning, const Image& hair_source,
                               const Mask& hair_mask, const RenderOptions& options = {});

}  // namespace degs
