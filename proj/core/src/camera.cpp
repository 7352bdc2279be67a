// SPDX-License-Identifier: Apache-2.0
#include "degs/camera.hpp"

#include <cmath>

namespace degs {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw Error(ErrorKind::invalid_parameter, "camera focal lengths must be positive");
  }
  if (!(near > 0.0) || !(near < far)) {
    throw Error(ErrorKind::invalid_parameter, "camera requires 0 < near < far");
  }
  if (width < 1 || height < 1) {
    throw Error(ErrorKind::invalid_parameter, "camera resolution must be at least 1x1");
  }
  if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(cx) ||
      !std::isfinite(cy)) {
    throw Error(ErrorKind::invalid_parameter, "camera pose is not finite");
  }
  if (!(rotation * rotation.transpose()).isApprox(Mat3::Identity(), 1e-9)) {
    throw Error(ErrorKind::invalid_parameter, "camera rotation is not orthonormal");
  }
}

Camera Camera::looking_forward(int width, int height, double focal, const Vec3& position) {
  Camera cam;
  cam.fx = focal;
  cam.fy = focal;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  cam.width = width;
  cam.height = height;
  cam.translation = -position;
  return cam;
}

}  // namespace degs
