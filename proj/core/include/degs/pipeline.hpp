// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/compositor.hpp"
#include "degs/conditioning.hpp"
#include "degs/densify.hpp"
#include "degs/deform_field.hpp"
#include "degs/losses.hpp"
#include "degs/optimizer.hpp"
#include "degs/scene_model.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace degs {

enum class Stage : std::uint8_t { static_init = 0, motion = 1, finetune = 2 };

std::string_view to_string(Stage stage) noexcept;
/// Accepts "static", "static_init", "motion", "finetune".
Stage parse_stage(std::string_view name);

struct LearningRates {
  double position = 1.6e-4;       // times scene extent
  double position_final_ratio = 0.01;
  double scale = 5e-3;
  double rotation = 1e-3;
  double opacity = 5e-2;
  double color = 2.5e-3;
  double field = 5e-4;            // encoder tables, MLP, embeddings
  double field_weight_decay = 1e-4;
  friend bool operator==(const LearningRates&, const LearningRates&) = default;
};

struct TrainingConfig {
  std::size_t face_splats = 2000;
  std::size_t mouth_splats = 500;
  std::size_t embedding_dim = 32;
  std::size_t color_dim = 3;
  double initial_opacity = 0.1;
  Aabb bounds{Vec3(-1.0, -1.0, -1.0), Vec3(1.0, 1.0, 0.2)};
  HashEncoderConfig encoder;
  MlpConfig mlp;
  LossWeights weights;
  LearningRates lr;
  int dilation_radius = 5;
  std::array<int, 3> iterations{2000, 5000, 1000};  // per stage
  DensifyConfig static_densify;
  DensifyConfig motion_densify{.enabled = false};
  int eval_interval = 100;
  bool log_wall_time = false;
  /// Also update canonical cloud parameters during motion learning.
  bool motion_updates_cloud = true;

  void validate() const;
};

/// One branch's trainable state.
struct BranchState {
  PrimitiveCloud cloud;
  DeformField field;
  AdamOptimizer optimizer;
  friend bool operator==(const BranchState&, const BranchState&) = default;
};

struct TrainingState {
  std::uint64_t seed = 0;
  ConditioningLayout layout;
  double scene_extent = 1.0;
  BranchState face;
  BranchState mouth;
  std::array<bool, 3> completed{false, false, false};
  std::array<std::uint64_t, 3> iterations_done{0, 0, 0};

  BranchState& branch(Branch b) { return b == Branch::face ? face : mouth; }
  const BranchState& branch(Branch b) const { return b == Branch::face ? face : mouth; }
  friend bool operator==(const TrainingState&, const TrainingState&) = default;
};

/// Fresh clouds (random in config.bounds), fields and optimizer groups for a
/// dataset with the given conditioning layout.
TrainingState initial_state(const TrainingConfig& config, const ConditioningLayout& layout,
                            std::uint64_t seed);

/// Adds the optimizer groups for a branch (used by initial_state).
void init_branch_optimizer(BranchState& branch, const LearningRates& lr, double scene_extent);

struct MetricsRow {
  int iteration = 0;
  double total_loss = 0.0;
  double l1 = 0.0;
  double dssim = 0.0;
  double jaw = 0.0;
  bool evaluated = false;
  double psnr = 0.0;
  double ssim = 0.0;
  std::size_t splat_count = 0;
  double wall_ms = 0.0;
};

struct StageReport {
  Stage stage = Stage::static_init;
  std::vector<MetricsRow> rows;
  LossDiagnostics diagnostics;
  std::size_t skipped_steps = 0;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);

/// Runs one stage in place. Throws a state error when prerequisites are
/// missing (motion needs static_init, finetune needs motion).
StageReport run_stage(Stage stage, const TrainingConfig& config, const Dataset& dataset,
                      TrainingState& state);

/// Training target of a branch: frame times the dilated branch mask, with
/// hair pixels removed.
Image branch_target(const FrameRecord& frame, Branch branch, int dilation_radius);

/// Fused render of one dataset frame with the state's clouds and fields.
/// `deform` selects whether the fields are applied.
PortraitRender render_frame(const TrainingState& state, const FrameRecord& frame, bool deform,
                            const RenderOptions& options = {});

struct BranchStepResult {
  LossBreakdown loss;
  RenderOutput render;
};

/// One optimization step of a single branch against `target`. With a field
/// the deformation is applied and its parameters and the embeddings are
/// trained as well. A null `jaw_mask` drops the jaw term. `progress` in
/// [0,1] drives the position lr decay.
BranchStepResult branch_step(BranchState& branch, const ConditioningFrame& conditioning,
                             const Image& target, const Mask* jaw_mask, bool use_field,
                             bool update_cloud, const TrainingConfig& config, double scene_extent,
                             double progress, GradientStats* stats, LossDiagnostics* diagnostics);

}  // namespace degs
