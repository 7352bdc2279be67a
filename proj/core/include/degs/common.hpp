// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace degs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

enum class ErrorKind {
  invalid_parameter,
  singular_covariance,
  render_abort,
  state,
  configuration,
  load,
  format,
  dimension_mismatch,
  invalid_input,
  io,
  usage,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the renderer when a primitive carries a non-finite parameter.
class RenderAbort : public Error {
 public:
  explicit RenderAbort(std::size_t primitive_index);
  std::size_t primitive_index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Row-major interleaved image, values nominally in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0);

  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::size_t size() const noexcept { return pixels.size(); }
  bool empty() const noexcept { return pixels.empty(); }
  bool same_shape(const Image& other) const noexcept {
    return width == other.width && height == other.height && channels == other.channels;
  }

  double& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Single-channel {0,1} image.
using Mask = Image;

bool is_binary_mask(const Image& mask);
std::size_t mask_count(const Mask& mask);

/// Deterministic per-subsystem seed derived from the root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) noexcept;

}  // namespace degs
