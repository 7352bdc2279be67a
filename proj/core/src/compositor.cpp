// SPDX-License-Identifier: Apache-2.0
#include "degs/compositor.hpp"

#include <algorithm>
#include <cmath>

namespace degs {
namespace {

void check_layers(const PortraitLayers& l) {
  const int w = l.face_color.width, h = l.face_color.height;
  auto ok = [&](const Image& img, int channels) {
    return img.width == w && img.height == h && img.channels == channels;
  };
  if (!ok(l.face_color, 3) || !ok(l.mouth_color, 3) || !ok(l.hair_color, 3) ||
      !ok(l.face_opacity, 1)) {
    throw Error(ErrorKind::invalid_input, "portrait layers differ in resolution or channel count");
  }
}

}  // namespace

Mask dilate_mask(const Mask& mask, int radius) {
  if (radius < 0) throw Error(ErrorKind::invalid_input, "dilation radius must be >= 0");
  if (mask.channels != 1) throw Error(ErrorKind::invalid_input, "masks are single-channel");
  if (radius == 0) return mask;
  std::vector<std::pair<int, int>> disk;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) disk.emplace_back(dx, dy);
    }
  }
  Mask out(mask.width, mask.height, 1, 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      for (auto [dx, dy] : disk) {
        const int sx = x + dx, sy = y + dy;
        if (sx < 0 || sy < 0 || sx >= mask.width || sy >= mask.height) continue;
        if (mask.at(sx, sy) != 0.0) {
          out.at(x, y) = 1.0;
          break;
        }
      }
    }
  }
  return out;
}

Image extract_hair_layer(const Image& frame, const Mask& hair_mask) {
  if (frame.width != hair_mask.width || frame.height != hair_mask.height ||
      hair_mask.channels != 1) {
    throw Error(ErrorKind::invalid_input, "hair mask does not match frame resolution");
  }
  Image out(frame.width, frame.height, frame.channels);
  for (std::size_t p = 0; p < frame.pixel_count(); ++p) {
    for (int c = 0; c < frame.channels; ++c) {
      out.pixels[p * frame.channels + c] = frame.pixels[p * frame.channels + c] * hair_mask.pixels[p];
    }
  }
  return out;
}

Image fuse_unclamped(const PortraitLayers& l) {
  check_layers(l);
  Image out(l.face_color.width, l.face_color.height, 3);
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    const double o = l.face_opacity.pixels[p];
    for (int c = 0; c < 3; ++c) {
      const std::size_t i = 3 * p + c;
      out.pixels[i] = l.hair_color.pixels[i] + l.face_color.pixels[i] * o +
                      l.mouth_color.pixels[i] * (1.0 - o);
    }
  }
  return out;
}

Image fuse(const PortraitLayers& layers, FuseStats* stats) {
  Image out = fuse_unclamped(layers);
  FuseStats s;
  for (double& v : out.pixels) {
    const double c = std::clamp(v, 0.0, 1.0);
    if (c != v) {
      ++s.clamped_values;
      s.overlap_energy += std::abs(v - c);
    }
    v = c;
  }
  if (stats) *stats = s;
  return out;
}

FuseGradients fuse_backward(const PortraitLayers& l, const Image& grad_output) {
  check_layers(l);
  const int w = l.face_color.width, h = l.face_color.height;
  if (grad_output.width != w || grad_output.height != h || grad_output.channels != 3) {
    throw Error(ErrorKind::invalid_input, "fusion gradient does not match layer resolution");
  }
  const Image pre = fuse_unclamped(l);
  FuseGradients g{Image(w, h, 3), Image(w, h, 1), Image(w, h, 3)};
  for (std::size_t p = 0; p < pre.pixel_count(); ++p) {
    const double o = l.face_opacity.pixels[p];
    double d_o = 0.0;
    for (int c = 0; c < 3; ++c) {
      const std::size_t i = 3 * p + c;
      const double v = pre.pixels[i];
      const double gi = (v < 0.0 || v > 1.0) ? 0.0 : grad_output.pixels[i];
      g.face_color.pixels[i] = gi * o;
      g.mouth_color.pixels[i] = gi * (1.0 - o);
      d_o += gi * (l.face_color.pixels[i] - l.mouth_color.pixels[i]);
    }
    g.face_opacity.pixels[p] = d_o;
  }
  return g;
}

BranchPass render_branch(const BranchView& branch, const ConditioningFrame& conditioning,
                         const RenderOptions& options) {
  if (branch.cloud == nullptr) throw Error(ErrorKind::invalid_input, "branch has no cloud");
  BranchPass pass;
  if (branch.field != nullptr) {
    const auto fe = conditioning.expression_features();
    pass.field_forward = predict_batch(*branch.field, *branch.cloud, conditioning.audio, fe);
    pass.deformed = apply_deformation(*branch.cloud, pass.field_forward.deltas);
  } else {
    pass.deformed = *branch.cloud;
  }
  pass.render = render(pass.deformed, conditioning.camera, Vec3::Zero(), options);
  return pass;
}

PortraitRender render_portrait(const BranchView& face, const BranchView& mouth,
                               const ConditioningFrame& conditioning, const Image& hair_source,
                               const Mask& hair_mask, const RenderOptions& options) {
  PortraitRender out;
  out.face = render_branch(face, conditioning, options);
  out.mouth = render_branch(mouth, conditioning, options);
  out.layers.hair_color = extract_hair_layer(hair_source, hair_mask);
  out.layers.face_color = out.face.render.color;
  out.layers.face_opacity = out.face.render.opacity;
  out.layers.mouth_color = out.mouth.render.color;
  out.image = fuse(out.layers, &out.stats);
  return out;
}

}  // namespace degs
