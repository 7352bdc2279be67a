// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/conditioning.hpp"
#include "degs/scene_model.hpp"

#include <cstdint>
#include <vector>

namespace degs {

/// Procedural talking-head scene: a spherical face cap with a mouth hole, a
/// mouth-interior cloud behind it, and a striped hair band above the head.
struct SynthSpec {
  int width = 64;
  int height = 64;
  int frames = 8;
  std::size_t face_splats = 400;
  std::size_t mouth_splats = 100;
  double head_radius = 0.8;
  double camera_distance = 3.0;
  double focal_scale = 1.25;      // focal length in units of image width
  double jaw_amplitude = 0.08;    // world-space jaw drop at psi_jaw = 1
  double wobble_amplitude = 0.04; // lateral shear at psi_exp[0] = 1
  bool hair = true;
  /// psi_jaw per frame; empty means a linear ramp 0 -> 1.
  std::vector<double> jaw_schedule;
  ConditioningLayout layout;

  void validate() const;
};

struct SynthScene {
  Dataset dataset;
  PrimitiveCloud face;   // canonical ground truth
  PrimitiveCloud mouth;
  std::vector<double> face_jaw_weight;   // per primitive, in [0,1]
  std::vector<double> mouth_jaw_weight;
  Aabb bounds;
};

/// Ground-truth analytic deformation: jaw-weighted drop along +y driven by
/// psi_jaw[0] and a shear along x driven by psi_expression[0].
PrimitiveCloud synth_deform(const PrimitiveCloud& canonical, const std::vector<double>& jaw_weight,
                            const ConditioningFrame& conditioning, const SynthSpec& spec);

SynthScene synth_sequence(const SynthSpec& spec, std::uint64_t seed);

}  // namespace degs
