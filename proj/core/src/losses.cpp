// SPDX-License-Identifier: Apache-2.0
#include "degs/losses.hpp"

#include <cmath>
#include <vector>

namespace degs {
namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::invalid_input, std::string(what) + ": image shapes differ");
  }
}

void require_mask(const Image& img, const Mask& mask) {
  if (mask.width != img.width || mask.height != img.height || mask.channels != 1) {
    throw Error(ErrorKind::invalid_input, "mask does not match image resolution");
  }
}

std::vector<double> gaussian_kernel(const SsimWindow& w) {
  std::vector<double> k(static_cast<std::size_t>(w.size));
  const double center = 0.5 * (w.size - 1);
  double sum = 0.0;
  for (int i = 0; i < w.size; ++i) {
    const double d = i - center;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * w.sigma * w.sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Valid-mode separable correlation of a width x height plane.
std::vector<double> filter_valid(const std::vector<double>& in, int width, int height,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = width - n + 1, oh = height - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * in[static_cast<std::size_t>(y) * width + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

// Adjoint of filter_valid: spreads a valid-size map back onto the full plane.
std::vector<double> filter_valid_adjoint(const std::vector<double>& in, int width, int height,
                                         const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = width - n + 1, oh = height - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * height, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double v = in[static_cast<std::size_t>(y) * ow + x];
      for (int i = 0; i < n; ++i) tmp[static_cast<std::size_t>(y + i) * ow + x] += k[i] * v;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(width) * height, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double v = tmp[static_cast<std::size_t>(y) * ow + x];
      for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(y) * width + x + i] += k[i] * v;
    }
  }
  return out;
}

std::vector<double> channel_plane(const Image& img, int c) {
  std::vector<double> p(img.pixel_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.pixels[i * img.channels + c];
  return p;
}

}  // namespace

void LossWeights::validate() const {
  if (!(lambda >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
    throw Error(ErrorKind::configuration, "loss weights must be non-negative");
  }
}

double loss_l1(const Image& a, const Image& b, const Mask* mask, Image* grad_a) {
  require_same_shape(a, b, "loss_l1");
  if (mask) require_mask(a, *mask);
  if (grad_a) *grad_a = Image(a.width, a.height, a.channels);
  std::size_t count = 0;
  double sum = 0.0;
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    if (mask && mask->pixels[p] == 0.0) continue;
    for (int c = 0; c < a.channels; ++c) {
      sum += std::abs(a.pixels[p * a.channels + c] - b.pixels[p * a.channels + c]);
    }
    count += static_cast<std::size_t>(a.channels);
  }
  if (count == 0) throw Error(ErrorKind::invalid_input, "L1 over an empty region");
  if (grad_a) {
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
      if (mask && mask->pixels[p] == 0.0) continue;
      for (int c = 0; c < a.channels; ++c) {
        const std::size_t i = p * a.channels + c;
        const double d = a.pixels[i] - b.pixels[i];
        grad_a->pixels[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
      }
    }
  }
  return sum / static_cast<double>(count);
}

double ssim(const Image& a, const Image& b, Image* grad_a, const SsimWindow& window) {
  require_same_shape(a, b, "ssim");
  if (a.width < window.size || a.height < window.size) {
    throw Error(ErrorKind::invalid_input, "image is smaller than the " +
                                              std::to_string(window.size) + "x" +
                                              std::to_string(window.size) + " SSIM window");
  }
  const auto k = gaussian_kernel(window);
  const int w = a.width, h = a.height;
  const int ow = w - window.size + 1, oh = h - window.size + 1;
  const double count = static_cast<double>(ow) * oh * a.channels;
  if (grad_a) *grad_a = Image(w, h, a.channels);

  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    const auto pa = channel_plane(a, c);
    const auto pb = channel_plane(b, c);
    std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, w, h, k);
    const auto mu_b = filter_valid(pb, w, h, k);
    const auto e_aa = filter_valid(aa, w, h, k);
    const auto e_bb = filter_valid(bb, w, h, k);
    const auto e_ab = filter_valid(ab, w, h, k);

    std::vector<double> d_mu, d_eaa, d_eab;
    if (grad_a) {
      d_mu.resize(mu_a.size());
      d_eaa.resize(mu_a.size());
      d_eab.resize(mu_a.size());
    }
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double var_a = e_aa[i] - ma * ma;
      const double var_b = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      const double a1 = 2.0 * ma * mb + window.c1;
      const double a2 = 2.0 * cov + window.c2;
      const double b1 = ma * ma + mb * mb + window.c1;
      const double b2 = var_a + var_b + window.c2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (grad_a) {
        const double scale = 1.0 / count;
        d_eaa[i] = -s / b2 * scale;
        d_eab[i] = 2.0 * s / a2 * scale;
        d_mu[i] = s * (2.0 * mb / a1 - 2.0 * ma / b1 - 2.0 * mb / a2 + 2.0 * ma / b2) * scale;
      }
    }
    if (grad_a) {
      const auto g_mu = filter_valid_adjoint(d_mu, w, h, k);
      const auto g_eaa = filter_valid_adjoint(d_eaa, w, h, k);
      const auto g_eab = filter_valid_adjoint(d_eab, w, h, k);
      for (std::size_t i = 0; i < pa.size(); ++i) {
        grad_a->pixels[i * a.channels + c] = g_mu[i] + 2.0 * pa[i] * g_eaa[i] + pb[i] * g_eab[i];
      }
    }
  }
  return total / count;
}

double loss_dssim(const Image& a, const Image& b, Image* grad_a) {
  const double s = ssim(a, b, grad_a);
  if (grad_a) {
    for (double& v : grad_a->pixels) v *= -0.5;
  }
  return 0.5 * (1.0 - s);
}

double loss_jaw(const Image& render, const Image& ground_truth, const Mask& jaw_mask,
                Image* grad_render, LossDiagnostics* diagnostics) {
  require_same_shape(render, ground_truth, "loss_jaw");
  require_mask(render, jaw_mask);
  if (mask_count(jaw_mask) == 0) {
    if (diagnostics) ++diagnostics->empty_jaw_masks;
    if (grad_render) *grad_render = Image(render.width, render.height, render.channels);
    return 0.0;
  }
  return loss_l1(render, ground_truth, &jaw_mask, grad_render);
}

namespace {

void add_scaled(Image* dst, const Image& src, double k) {
  if (!dst) return;
  for (std::size_t i = 0; i < dst->pixels.size(); ++i) dst->pixels[i] += k * src.pixels[i];
}

}  // namespace

LossBreakdown motion_loss(const Image& render, const Image& masked_gt, const Mask& jaw_mask,
                          const LossWeights& weights, Image* grad_render,
                          LossDiagnostics* diagnostics) {
  weights.validate();
  LossBreakdown out;
  Image g_l1, g_ssim, g_jaw;
  out.l1 = loss_l1(render, masked_gt, nullptr, grad_render ? &g_l1 : nullptr);
  out.dssim = loss_dssim(render, masked_gt, grad_render ? &g_ssim : nullptr);
  out.jaw = loss_jaw(render, masked_gt, jaw_mask, grad_render ? &g_jaw : nullptr, diagnostics);
  out.total = out.l1 + weights.lambda * out.dssim + weights.beta * out.jaw;
  if (grad_render) {
    *grad_render = g_l1;
    add_scaled(grad_render, g_ssim, weights.lambda);
    add_scaled(grad_render, g_jaw, weights.beta);
  }
  return out;
}

LossBreakdown finetune_loss(const Image& fused, const Image& ground_truth,
                            const LossWeights& weights, const PerceptualPlugin* plugin,
                            Image* grad_fused) {
  weights.validate();
  LossBreakdown out;
  Image g_l1, g_ssim, g_p;
  out.l1 = loss_l1(fused, ground_truth, nullptr, grad_fused ? &g_l1 : nullptr);
  out.dssim = loss_dssim(fused, ground_truth, grad_fused ? &g_ssim : nullptr);
  out.total = out.l1 + weights.lambda * out.dssim;
  if (grad_fused) {
    *grad_fused = g_l1;
    add_scaled(grad_fused, g_ssim, weights.lambda);
  }
  if (plugin != nullptr) {
    out.perceptual = plugin->evaluate(fused, ground_truth, grad_fused ? &g_p : nullptr);
    out.total += weights.gamma * out.perceptual;
    if (grad_fused) add_scaled(grad_fused, g_p, weights.gamma);
  }
  return out;
}

double metric_psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "metric_psnr");
  if (a.pixels.empty()) throw Error(ErrorKind::invalid_input, "PSNR of empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.pixels.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

double metric_ssim(const Image& a, const Image& b) { return ssim(a, b); }

}  // namespace degs
