// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/common.hpp"

#include <cstddef>
#include <limits>

namespace degs {

struct LossWeights {
  double lambda = 0.5;  // D-SSIM
  double beta = 0.001;  // jaw
  double gamma = 0.2;   // perceptual, only when a plugin is configured

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Mean |a - b| over (masked) pixels and channels. When `grad_a` is given it
/// receives dL/da. Throws invalid_input on an empty mask.
double loss_l1(const Image& a, const Image& b, const Mask* mask = nullptr, Image* grad_a = nullptr);

struct SsimWindow {
  int size = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

/// Mean SSIM over valid window positions and channels. Throws invalid_input
/// when the image is smaller than the window.
double ssim(const Image& a, const Image& b, Image* grad_a = nullptr, const SsimWindow& window = {});

/// (1 - SSIM) / 2.
double loss_dssim(const Image& a, const Image& b, Image* grad_a = nullptr);

struct LossDiagnostics {
  std::size_t empty_jaw_masks = 0;
};

/// L1 restricted to the jaw mask. An empty mask yields 0 and bumps the counter.
double loss_jaw(const Image& render, const Image& ground_truth, const Mask& jaw_mask,
                Image* grad_render = nullptr, LossDiagnostics* diagnostics = nullptr);

struct LossBreakdown {
  double total = 0.0;
  double l1 = 0.0;
  double dssim = 0.0;
  double jaw = 0.0;
  double perceptual = 0.0;
};

/// L1 + lambda * D-SSIM + beta * L_jaw against the masked ground truth.
LossBreakdown motion_loss(const Image& render, const Image& masked_gt, const Mask& jaw_mask,
                          const LossWeights& weights, Image* grad_render = nullptr,
                          LossDiagnostics* diagnostics = nullptr);

/// Hook for a learned perceptual metric; none ships with the library.
class PerceptualPlugin {
 public:
  virtual ~PerceptualPlugin() = default;
  virtual double evaluate(const Image& a, const Image& b, Image* grad_a) const = 0;
};

/// L1 + lambda * D-SSIM (+ gamma * perceptual when a plugin is given).
LossBreakdown finetune_loss(const Image& fused, const Image& ground_truth,
                            const LossWeights& weights, const PerceptualPlugin* plugin = nullptr,
                            Image* grad_fused = nullptr);

/// 10 log10(1 / MSE); +infinity for identical images.
double metric_psnr(const Image& a, const Image& b);
double metric_ssim(const Image& a, const Image& b);

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

}  // namespace degs
