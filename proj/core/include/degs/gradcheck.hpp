// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace degs {

struct GradCheckOptions {
  int scenes = 20;
  int max_splats = 10;
  int width = 32;
  int height = 32;
  double step = 1e-6;        // central-difference step
  double rel_tolerance = 1e-3;
  double abs_floor = 1e-6;   // differences below this always pass
  int samples_per_tensor = 24;  // entries probed per large tensor per scene
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  std::size_t checked = 0;
  /// Points where forward and backward one-sided differences disagree (the
  /// function has a kink or jump inside the step); excluded from the error.
  std::size_t nonsmooth = 0;
  double max_rel_error = 0.0;  // over entries with magnitude above the absolute floor
  double max_abs_error = 0.0;
  std::size_t failures = 0;
  bool passed() const noexcept { return failures == 0 && checked > 0; }
};

struct GradCheckReport {
  std::vector<GradCheckResult> checks;
  double seconds = 0.0;
  bool passed() const noexcept;
  double max_rel_error() const noexcept;
};

/// Analytic vs central finite-difference gradients for the rasterizer,
/// tri-plane encoder, MLP, pre-embeddings (through field and renderer) and
/// fusion, on random scenes.
GradCheckReport run_gradcheck(const GradCheckOptions& options);

std::string format_gradcheck(const GradCheckReport& report);

}  // namespace degs
