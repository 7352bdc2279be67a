// SPDX-License-Identifier: Apache-2.0
#include "degs/gradcheck.hpp"

#include "degs/compositor.hpp"
#include "degs/deform_field.hpp"
#include "degs/splat_renderer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>

namespace degs {
namespace {

using Rng = std::mt19937_64;

class Checker {
 public:
  explicit Checker(const GradCheckOptions& o) : o_(o) {}

  /// Compares `analytic` against central differences of `f` around `x`.
  void check(const std::string& name, double& x, double analytic, const std::function<double()>& f) {
    GradCheckResult& r = results_[name];
    r.name = name;
    const double x0 = x;
    const double h = o_.step;
    const double f0 = f();
    x = x0 + h;
    const double fp = f();
    x = x0 - h;
    const double fm = f();
    x = x0;
    const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
    const double scale = std::max({std::abs(fwd), std::abs(bwd), std::abs(analytic)});
    if (std::abs(fwd - bwd) > o_.abs_floor && std::abs(fwd - bwd) > 1e-2 * scale) {
      ++r.nonsmooth;
      return;
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double abs_err = std::abs(analytic - numeric);
    ++r.checked;
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    const double rel = mag > 0.0 ? abs_err / mag : 0.0;
    if (mag > o_.abs_floor) r.max_rel_error = std::max(r.max_rel_error, rel);
    if (abs_err >= o_.abs_floor && rel >= o_.rel_tolerance) ++r.failures;
  }

  std::vector<GradCheckResult> results() const {
    std::vector<GradCheckResult> out;
    for (const auto& [k, v] : results_) out.push_back(v);
    return out;
  }

 private:
  GradCheckOptions o_;
  std::map<std::string, GradCheckResult> results_;
};

double uniform(Rng& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

Image random_image(Rng& rng, int w, int h, int c, double a = -1.0, double b = 1.0) {
  Image img(w, h, c);
  for (double& v : img.pixels) v = uniform(rng, a, b);
  return img;
}

double dot(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += a.pixels[i] * b.pixels[i];
  return s;
}

PrimitiveCloud random_scene(Rng& rng, int splats, std::size_t color_dim, std::size_t embedding_dim) {
  Aabb bounds{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  PrimitiveCloud cloud(Branch::face, bounds, embedding_dim, color_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < splats; ++i) {
    GaussianPrimitive p;
    p.mu = Vec3(uniform(rng, -0.6, 0.6), uniform(rng, -0.6, 0.6), uniform(rng, -0.5, 0.5));
    for (int k = 0; k < 3; ++k) p.raw_scale[k] = std::log(uniform(rng, 0.06, 0.25));
    for (int k = 0; k < 4; ++k) p.raw_rotation[k] = normal(rng);
    p.raw_opacity = uniform(rng, -1.5, 1.5);
    p.color_feature.resize(color_dim);
    for (auto& c : p.color_feature) c = uniform(rng, color_dim == 3 ? 0.0 : -0.5, color_dim == 3 ? 1.0 : 1.0);
    p.embedding.resize(embedding_dim);
    for (auto& z : p.embedding) z = 0.5 * normal(rng);
    cloud.push_back(p);
  }
  return cloud;
}

Camera gradcheck_camera(const GradCheckOptions& o) {
  return Camera::looking_forward(o.width, o.height, 1.25 * o.width, Vec3(0.0, 0.0, -3.0));
}

void check_rasterizer(Checker& ck, Rng& rng, const GradCheckOptions& o, std::size_t color_dim) {
  const int n = std::uniform_int_distribution<int>(1, o.max_splats)(rng);
  PrimitiveCloud cloud = random_scene(rng, n, color_dim, 0);
  const Camera cam = gradcheck_camera(o);
  const Vec3 bg(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
  const Image wc = random_image(rng, o.width, o.height, 3);
  const Image wo = random_image(rng, o.width, o.height, 1);
  RenderOptions fwd;
  fwd.retain_records = false;
  auto loss = [&] {
    const RenderOutput r = render(cloud, cam, bg, fwd);
    return dot(r.color, wc) + dot(r.opacity, wo);
  };
  const RenderOutput out = render(cloud, cam, bg);
  const RenderGradients g = render_backward(out, wc, &wo);
  auto& p = cloud.params();
  const std::string pre = color_dim == 3 ? "rasterizer." : "rasterizer_sh.";
  for (std::size_t i = 0; i < p.mu.size(); ++i) ck.check(pre + "mu", p.mu[i], g.params.mu[i], loss);
  for (std::size_t i = 0; i < p.raw_scale.size(); ++i) ck.check(pre + "scale", p.raw_scale[i], g.params.raw_scale[i], loss);
  for (std::size_t i = 0; i < p.raw_rotation.size(); ++i) ck.check(pre + "rotation", p.raw_rotation[i], g.params.raw_rotation[i], loss);
  for (std::size_t i = 0; i < p.raw_opacity.size(); ++i) ck.check(pre + "opacity", p.raw_opacity[i], g.params.raw_opacity[i], loss);
  for (std::size_t i = 0; i < p.color.size(); ++i) ck.check(pre + "color", p.color[i], g.params.color[i], loss);
}

HashEncoderConfig small_encoder() {
  HashEncoderConfig e;
  e.levels = 4;
  e.log2_table_size = 10;
  e.min_resolution = 4;
  e.max_resolution = 64;
  return e;
}

void check_encoder(Checker& ck, Rng& rng, const GradCheckOptions& o) {
  const Aabb bounds{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  TriPlaneHashEncoder enc(small_encoder(), bounds);
  enc.init_uniform(rng(), 0.5);
  const int queries = 3;
  std::vector<Vec3> mu(queries);
  for (auto& m : mu) m = Vec3(uniform(rng, -0.9, 0.9), uniform(rng, -0.9, 0.9), uniform(rng, -0.9, 0.9));
  const int width = enc.output_width();
  std::vector<double> w(static_cast<std::size_t>(width * queries));
  for (double& v : w) v = uniform(rng, -1, 1);
  auto loss = [&] {
    std::vector<double> out(static_cast<std::size_t>(width));
    double s = 0.0;
    for (int q = 0; q < queries; ++q) {
      enc.encode(mu[static_cast<std::size_t>(q)], out.data());
      for (int k = 0; k < width; ++k) s += w[static_cast<std::size_t>(q * width + k)] * out[static_cast<std::size_t>(k)];
    }
    return s;
  };
  std::vector<double> d_tables(enc.tables().size(), 0.0);
  std::vector<Vec3> d_mu(queries);
  std::vector<std::uint32_t> touched;
  for (int q = 0; q < queries; ++q) {
    std::vector<double> out(static_cast<std::size_t>(width));
    EncodeTrace trace;
    enc.encode(mu[static_cast<std::size_t>(q)], out.data(), &trace);
    d_mu[static_cast<std::size_t>(q)] = enc.backward(trace, &w[static_cast<std::size_t>(q * width)], d_tables.data());
  }
  for (int q = 0; q < queries; ++q) {
    for (int k = 0; k < 3; ++k) ck.check("encoder.mu", mu[static_cast<std::size_t>(q)][k], d_mu[static_cast<std::size_t>(q)][k], loss);
  }
  std::vector<std::size_t> nonzero;
  for (std::size_t i = 0; i < d_tables.size(); ++i) {
    if (d_tables[i] != 0.0) nonzero.push_back(i);
  }
  std::shuffle(nonzero.begin(), nonzero.end(), rng);
  nonzero.resize(std::min<std::size_t>(nonzero.size(), static_cast<std::size_t>(o.samples_per_tensor)));
  for (std::size_t i : nonzero) ck.check("encoder.tables", enc.tables()[i], d_tables[i], loss);
  // Untouched entries must have exactly zero gradient.
  for (int s = 0; s < 4; ++s) {
    const auto i = std::uniform_int_distribution<std::size_t>(0, d_tables.size() - 1)(rng);
    ck.check("encoder.tables", enc.tables()[i], d_tables[i], loss);
  }
}

void randomize_mlp(Mlp& mlp, Rng& rng, double scale) {
  for (auto& layer : mlp.layers()) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = uniform(rng, -scale, scale);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = uniform(rng, -scale, scale);
  }
}

void check_mlp(Checker& ck, Rng& rng, const GradCheckOptions& o) {
  Mlp mlp(12, 5, MlpConfig{16, 2}, rng());
  randomize_mlp(mlp, rng, 0.5);
  Eigen::MatrixXd x(12, 4), w(5, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform(rng, -1, 1);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -1, 1);
  auto loss = [&] { return (mlp.forward(x).array() * w.array()).sum(); };
  MlpTrace trace;
  mlp.forward(x, &trace);
  auto grads = mlp.zero_gradients();
  const Eigen::MatrixXd dx = mlp.backward(trace, w, grads);
  for (Eigen::Index i = 0; i < x.size(); ++i) ck.check("mlp.input", x.data()[i], dx.data()[i], loss);
  for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
    auto& layer = mlp.layers()[l];
    for (int s = 0; s < o.samples_per_tensor; ++s) {
      const auto i = std::uniform_int_distribution<Eigen::Index>(0, layer.weight.size() - 1)(rng);
      ck.check("mlp.weights", layer.weight.data()[i], grads[l].weight.data()[i], loss);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) ck.check("mlp.bias", layer.bias[i], grads[l].bias[i], loss);
  }
}

void check_field_chain(Checker& ck, Rng& rng, const GradCheckOptions& o) {
  const int n = std::uniform_int_distribution<int>(1, o.max_splats)(rng);
  const std::size_t d = 4;
  PrimitiveCloud cloud = random_scene(rng, n, 3, d);
  FieldConfig fc;
  fc.encoder = small_encoder();
  fc.mlp = {16, 2};
  fc.layout = {static_cast<int>(d), 3, 2};
  DeformField field(fc, cloud.bounds(), rng());
  field.encoder().init_uniform(rng(), 0.2);
  randomize_mlp(field.mlp(), rng, 0.3);
  std::vector<double> audio{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
  std::vector<double> expr{uniform(rng, -1, 1), uniform(rng, -1, 1)};
  const Camera cam = gradcheck_camera(o);
  const Image wc = random_image(rng, o.width, o.height, 3);
  RenderOptions fwd;
  fwd.retain_records = false;
  auto loss = [&] {
    const FieldForward ff = predict_batch(field, cloud, audio, expr);
    const RenderOutput r = render(apply_deformation(cloud, ff.deltas), cam, Vec3::Zero(), fwd);
    return dot(r.color, wc);
  };
  const FieldForward ff = predict_batch(field, cloud, audio, expr);
  const RenderOutput out = render(apply_deformation(cloud, ff.deltas), cam, Vec3::Zero());
  const RenderGradients rg = render_backward(out, wc);
  Eigen::MatrixXd dd(kDeltaWidth, n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      dd(k, i) = rg.params.mu[3 * i + k];
      dd(3 + k, i) = rg.params.raw_scale[3 * i + k];
    }
    for (int k = 0; k < 4; ++k) dd(6 + k, i) = rg.params.raw_rotation[4 * i + k];
  }
  const FieldGradients fg = field_backward(field, ff, dd);
  auto& p = cloud.params();
  for (std::size_t i = 0; i < p.embedding.size(); ++i) ck.check("embeddings", p.embedding[i], fg.embedding[i], loss);
  for (std::size_t i = 0; i < p.mu.size(); ++i) {
    ck.check("deform.mu", p.mu[i], rg.params.mu[i] + fg.mu[i], loss);
  }
  for (std::size_t i = 0; i < audio.size(); ++i) ck.check("deform.audio", audio[i], fg.audio[i], loss);
  for (std::size_t i = 0; i < expr.size(); ++i) ck.check("deform.expression", expr[i], fg.expression[i], loss);
  auto& last = field.mlp().layers().back();
  for (int s = 0; s < o.samples_per_tensor / 2; ++s) {
    const auto i = std::uniform_int_distribution<Eigen::Index>(0, last.weight.size() - 1)(rng);
    ck.check("deform.mlp_weights", last.weight.data()[i], fg.mlp.back().weight.data()[i], loss);
  }
}

void check_fusion(Checker& ck, Rng& rng, const GradCheckOptions& o) {
  const int w = 8, h = 8;
  PortraitLayers l{Image(w, h, 3), random_image(rng, w, h, 3, 0.0, 1.0),
                   random_image(rng, w, h, 1, 0.0, 1.0), random_image(rng, w, h, 3, 0.0, 1.0)};
  const Image wg = random_image(rng, w, h, 3);
  auto loss = [&] { return dot(fuse(l), wg); };
  const FuseGradients g = fuse_backward(l, wg);
  for (int s = 0; s < o.samples_per_tensor; ++s) {
    const auto i = std::uniform_int_distribution<std::size_t>(0, l.face_color.pixels.size() - 1)(rng);
    const auto p = std::uniform_int_distribution<std::size_t>(0, l.face_opacity.pixels.size() - 1)(rng);
    ck.check("fusion.face_color", l.face_color.pixels[i], g.face_color.pixels[i], loss);
    ck.check("fusion.mouth_color", l.mouth_color.pixels[i], g.mouth_color.pixels[i], loss);
    ck.check("fusion.face_opacity", l.face_opacity.pixels[p], g.face_opacity.pixels[p], loss);
  }
}

}  // namespace

bool GradCheckReport::passed() const noexcept {
  if (checks.empty()) return false;
  return std::all_of(checks.begin(), checks.end(), [](const GradCheckResult& r) { return r.passed(); });
}

double GradCheckReport::max_rel_error() const noexcept {
  double m = 0.0;
  for (const auto& c : checks) m = std::max(m, c.max_rel_error);
  return m;
}

GradCheckReport run_gradcheck(const GradCheckOptions& options) {
  if (options.scenes < 1 || options.max_splats < 1 || options.width < 1 || options.height < 1 ||
      !(options.step > 0.0)) {
    throw Error(ErrorKind::invalid_parameter, "invalid gradcheck options");
  }
  const auto t0 = std::chrono::steady_clock::now();
  Checker ck(options);
  for (int s = 0; s < options.scenes; ++s) {
    Rng rng(derive_seed(options.seed, "gradcheck." + std::to_string(s)));
    check_rasterizer(ck, rng, options, 3);
    check_rasterizer(ck, rng, options, 12);
    check_encoder(ck, rng, options);
    check_mlp(ck, rng, options);
    check_field_chain(ck, rng, options);
    check_fusion(ck, rng, options);
  }
  GradCheckReport report;
  report.checks = ck.results();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string format_gradcheck(const GradCheckReport& report) {
  std::string out;
  char buf[256];
  for (const auto& c : report.checks) {
    std::snprintf(buf, sizeof buf, "%-22s checked=%-6zu nonsmooth=%-4zu max_rel=%.3e max_abs=%.3e %s\n",
                  c.name.c_str(), c.checked, c.nonsmooth, c.max_rel_error, c.max_abs_error,
                  c.passed() ? "ok" : "FAIL");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "max relative error %.3e over all checks, %.2f s, %s\n",
                report.max_rel_error(), report.seconds, report.passed() ? "PASS" : "FAIL");
  out += buf;
  return out;
}

}  // namespace degs
