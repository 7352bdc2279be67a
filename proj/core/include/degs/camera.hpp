// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/common.hpp"

namespace degs {

/// Pinhole camera. Pixel (x, y) samples the image plane at integer
/// coordinates; world-to-camera is x_cam = rotation * x_world + translation.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  double near = 0.01;
  double far = 100.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  /// Throws invalid_parameter when an invariant is violated.
  void validate() const;

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }

  /// Camera at `position` looking along +z of world, principal point at the image centre.
  static Camera looking_forward(int width, int height, double focal, const Vec3& position);

  friend bool operator==(const Camera&, const Camera&) = default;
};

}  // namespace degs
