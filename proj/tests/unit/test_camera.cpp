// SPDX-License-Identifier: Apache-2.0
#include "degs/camera.hpp"

#include <gtest/gtest.h>

#include <Eigen/Geometry>

namespace degs {
namespace {

TEST(Camera, LookingForwardPlacesCentre) {
  const Camera c = Camera::looking_forward(64, 48, 80.0, Vec3(0.5, 0.0, -3.0));
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.center(), Vec3(0.5, 0.0, -3.0));
  EXPECT_DOUBLE_EQ(c.cx, 31.5);
  EXPECT_DOUBLE_EQ(c.cy, 23.5);
  EXPECT_EQ(c.to_camera(Vec3(0.5, 0.0, 0.0)), Vec3(0.0, 0.0, 3.0));
}

TEST(Camera, ValidateRejectsBrokenInvariants) {
  const Camera good = Camera::looking_forward(8, 8, 10.0, Vec3(0, 0, -2));
  auto expect_invalid = [](Camera c) {
    try {
      c.validate();
      ADD_FAILURE() << "expected invalid camera";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::invalid_parameter);
    }
  };
  Camera c = good;
  c.fx = 0.0;
  expect_invalid(c);
  c = good;
  c.near = 5.0;
  c.far = 1.0;
  expect_invalid(c);
  c = good;
  c.width = 0;
  expect_invalid(c);
  c = good;
  c.rotation(0, 0) = 2.0;
  expect_invalid(c);
  c = good;
  c.rotation = Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  EXPECT_NO_THROW(c.validate());
}

}  // namespace
}  // namespace degs
