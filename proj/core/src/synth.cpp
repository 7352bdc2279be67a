// SPDX-License-Identifier: Apache-2.0
#include "degs/synth.hpp"

#include "degs/compositor.hpp"
#include "degs/splat_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace degs {
namespace {

constexpr double kPi = 3.14159265358979323846;

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

struct MouthShape {
  double cx = 0.0, cy = 0.32, rx = 0.22, ry = 0.08;
  bool inside(double x, double y, double grow = 1.0) const {
    const double u = (x - cx) / (rx * grow), v = (y - cy) / (ry * grow);
    return u * u + v * v < 1.0;
  }
};

Vec3 face_color(double x, double y, const MouthShape& mouth) {
  Vec3 c(0.85, 0.62, 0.50);
  c += Vec3(0.08, 0.06, 0.05) * std::sin(6.0 * x) * std::cos(5.0 * y);
  for (double ex : {-0.28, 0.28}) {
    const double d = std::hypot(x - ex, y + 0.15);
    const double w = 1.0 - smoothstep(0.05, 0.09, d);
    c = (1.0 - w) * c + w * Vec3(0.12, 0.08, 0.08);
  }
  if (mouth.inside(x, y, 1.45)) c = Vec3(0.72, 0.28, 0.30);
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

GaussianPrimitive make_splat(const Vec3& mu, double scale, const Vec3& color, double opacity) {
  GaussianPrimitive p;
  p.mu = mu;
  p.raw_scale = Vec3::Constant(std::log(scale));
  p.raw_opacity = logit(opacity);
  p.color_feature = {color[0], color[1], color[2]};
  return p;
}

Vec3 hair_color(int x, int y) {
  const double s = std::sin(0.9 * x + 0.3 * y);
  return Vec3(0.36 + 0.08 * s, 0.23 + 0.05 * s, 0.12 + 0.03 * s);
}

}  // namespace

void SynthSpec::validate() const {
  layout.validate();
  if (frames < 1) throw Error(ErrorKind::invalid_parameter, "synthetic sequence needs frames >= 1");
  if (width < 16 || height < 16) throw Error(ErrorKind::invalid_parameter, "synthetic frames must be at least 16x16");
  if (face_splats == 0 || mouth_splats == 0) {
    throw Error(ErrorKind::invalid_parameter, "synthetic clouds need at least one splat each");
  }
  if (layout.jaw < 1 || layout.expression < 2) {
    throw Error(ErrorKind::invalid_parameter, "synthetic scenes need jaw >= 1 and expression >= 2");
  }
  if (!jaw_schedule.empty() && static_cast<int>(jaw_schedule.size()) != frames) {
    throw Error(ErrorKind::invalid_parameter, "jaw schedule length differs from frame count");
  }
}

PrimitiveCloud synth_deform(const PrimitiveCloud& canonical, const std::vector<double>& jaw_weight,
                            const ConditioningFrame& conditioning, const SynthSpec& spec) {
  PrimitiveCloud out = canonical;
  const double jaw = conditioning.psi_jaw.empty() ? 0.0 : conditioning.psi_jaw[0];
  const double exp0 = conditioning.psi_expression.empty() ? 0.0 : conditioning.psi_expression[0];
  auto& mu = out.params().mu;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double y = mu[3 * i + 1];
    mu[3 * i + 0] += spec.wobble_amplitude * exp0 * y / spec.head_radius;
    mu[3 * i + 1] += spec.jaw_amplitude * jaw * jaw_weight[i];
  }
  return out;
}

SynthScene synth_sequence(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double r = spec.head_radius;
  const MouthShape mouth;

  SynthScene scene;
  scene.bounds.lo = Vec3(-r, -r, -r);
  scene.bounds.hi = Vec3(r, r, 0.1 * r);
  scene.face = PrimitiveCloud(Branch::face, scene.bounds, 0, 3);
  scene.mouth = PrimitiveCloud(Branch::mouth, scene.bounds, 0, 3);

  // Face cap: rejection-sampled on the front of the sphere, mouth hole removed.
  const double cap = 0.78 * r;
  const double face_area = kPi * cap * cap;
  const double face_scale = 0.6 * std::sqrt(face_area / static_cast<double>(spec.face_splats));
  while (scene.face.size() < spec.face_splats) {
    const double x = (2.0 * unit(rng) - 1.0) * cap;
    const double y = (2.0 * unit(rng) - 1.0) * cap;
    if (x * x + y * y > cap * cap || mouth.inside(x, y)) continue;
    const Vec3 mu(x, y, -std::sqrt(r * r - x * x - y * y));
    scene.face.push_back(make_splat(mu, face_scale, face_color(x, y, mouth), 0.95));
    scene.face_jaw_weight.push_back(smoothstep(mouth.cy - 0.04, mouth.cy + 0.12, y));
  }

  // Mouth interior: a slab behind the hole, teeth band on the upper edge.
  const double mouth_area = kPi * 1.4 * mouth.rx * 1.9 * mouth.ry;
  const double mouth_scale = 0.6 * std::sqrt(mouth_area / static_cast<double>(spec.mouth_splats));
  while (scene.mouth.size() < spec.mouth_splats) {
    const double x = mouth.cx + (2.0 * unit(rng) - 1.0) * 1.4 * mouth.rx;
    const double y = mouth.cy + (2.0 * unit(rng) - 1.0) * 1.9 * mouth.ry;
    if (!mouth.inside(x, y, 1.5)) continue;
    const Vec3 mu(x, y, -std::sqrt(r * r - x * x - y * y) + 0.08);
    const bool teeth = y < mouth.cy - 0.45 * mouth.ry;
    const Vec3 color = teeth ? Vec3(0.92, 0.90, 0.86) : Vec3(0.32, 0.06, 0.09);
    scene.mouth.push_back(make_splat(mu, mouth_scale, color, 0.95));
    scene.mouth_jaw_weight.push_back(smoothstep(mouth.cy - 0.02, mouth.cy + 0.08, y));
  }

  const Camera camera = Camera::looking_forward(spec.width, spec.height,
                                                spec.focal_scale * spec.width,
                                                Vec3(0.0, 0.0, -spec.camera_distance));
  const auto& layout = spec.layout;

  // Sequence-constant identity/shape and a fixed audio direction.
  auto gauss_vec = [&](int n, double sd) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = sd * normal(rng);
    return v;
  };
  const auto psi_id = gauss_vec(layout.id, 0.5);
  const auto psi_shape = gauss_vec(layout.shape, 0.5);
  const auto audio_dir = gauss_vec(layout.audio, 1.0);

  // Hair band in image space, fixed for the sequence.
  const double head_px = spec.focal_scale * spec.width * r / (spec.camera_distance - 0.3 * r);
  const double hcx = camera.cx, hcy = camera.cy;

  Dataset& ds = scene.dataset;
  ds.manifest.width = spec.width;
  ds.manifest.height = spec.height;
  ds.manifest.frame_count = spec.frames;
  ds.manifest.layout = layout;
  const RenderOptions options;

  for (int f = 0; f < spec.frames; ++f) {
    ConditioningFrame c = ConditioningFrame::zeros(layout, camera, f);
    const double jaw = spec.jaw_schedule.empty()
                           ? (spec.frames == 1 ? 0.0 : static_cast<double>(f) / (spec.frames - 1))
                           : spec.jaw_schedule[static_cast<std::size_t>(f)];
    c.psi_jaw[0] = jaw;
    c.psi_id = psi_id;
    c.psi_shape = psi_shape;
    c.psi_expression = gauss_vec(layout.expression, 0.05);
    c.psi_expression[0] = 0.8 * std::sin(2.1 * f);
    c.psi_expression[1] = jaw;
    c.psi_eye = gauss_vec(layout.eye, 0.05);
    for (int k = 0; k < layout.audio; ++k) {
      const double a = jaw * audio_dir[static_cast<std::size_t>(k)] + 0.05 * normal(rng);
      c.audio[static_cast<std::size_t>(k)] = static_cast<float>(a);
    }

    const PrimitiveCloud face = synth_deform(scene.face, scene.face_jaw_weight, c, spec);
    const PrimitiveCloud mouth_cloud = synth_deform(scene.mouth, scene.mouth_jaw_weight, c, spec);
    RenderOptions opts = options;
    opts.retain_records = false;
    const RenderOutput rf = render(face, camera, Vec3::Zero(), opts);
    const RenderOutput rm = render(mouth_cloud, camera, Vec3::Zero(), opts);

    FrameRecord rec;
    const int w = spec.width, h = spec.height;
    rec.masks.face = Mask(w, h, 1);
    rec.masks.mouth = Mask(w, h, 1);
    rec.masks.hair = Mask(w, h, 1);
    rec.masks.jaw = Mask(w, h, 1);
    Image hair_src(w, h, 3);
    const double jaw_row = hcy + spec.focal_scale * spec.width * (mouth.cy - mouth.ry) /
                                     (spec.camera_distance - 0.9 * r);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double of = rf.opacity.at(x, y);
        const double om = rm.opacity.at(x, y);
        const bool face_px = of >= 0.5;
        const bool mouth_px = !face_px && om >= 0.5;
        rec.masks.face.at(x, y) = face_px ? 1.0 : 0.0;
        rec.masks.mouth.at(x, y) = mouth_px ? 1.0 : 0.0;
        rec.masks.jaw.at(x, y) = ((face_px || mouth_px) && y >= jaw_row) ? 1.0 : 0.0;
        if (spec.hair) {
          const double d = std::hypot(x - hcx, y - hcy);
          const bool band = d <= 1.18 * head_px && y < hcy - 0.35 * head_px;
          if (band && of < 0.02 && om < 0.02) {
            rec.masks.hair.at(x, y) = 1.0;
            const Vec3 hc = hair_color(x, y);
            for (int k = 0; k < 3; ++k) hair_src.at(x, y, k) = hc[k];
          }
        }
      }
    }
    PortraitLayers layers{extract_hair_layer(hair_src, rec.masks.hair), rf.color, rf.opacity,
                          rm.color};
    rec.image = fuse(layers);
    quantize_16bit(rec.image);
    rec.conditioning = std::move(c);
    ds.frames.push_back(std::move(rec));
  }
  return scene;
}

}  // namespace degs
