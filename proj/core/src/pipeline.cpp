// SPDX-License-Identifier: Apache-2.0
#include "degs/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

namespace degs {
namespace {

constexpr const char* kRowGroups[] = {"mu", "scale", "rotation", "opacity", "color", "embedding"};

std::string mlp_group(std::size_t layer, bool weight) {
  return "mlp." + std::to_string(layer) + (weight ? ".w" : ".b");
}

std::size_t row_width(const PrimitiveCloud& cloud, const std::string& group) {
  if (group == "mu" || group == "scale") return 3;
  if (group == "rotation") return 4;
  if (group == "opacity") return 1;
  if (group == "color") return cloud.color_dim();
  return cloud.embedding_dim();
}

void step_cloud(BranchState& b, const CloudTensors& g, double position_scale) {
  auto& p = b.cloud.params();
  auto& opt = b.optimizer;
  opt.step("mu", p.mu, g.mu, position_scale);
  opt.step("scale", p.raw_scale, g.raw_scale);
  opt.step("rotation", p.raw_rotation, g.raw_rotation);
  opt.step("opacity", p.raw_opacity, g.raw_opacity);
  opt.step("color", p.color, g.color);
}

void step_field(BranchState& b, const FieldGradients& g) {
  auto& opt = b.optimizer;
  opt.step("tables", b.field.encoder().tables(), g.tables);
  auto& layers = b.field.mlp().layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    auto& w = layers[k].weight;
    auto& bias = layers[k].bias;
    opt.step(mlp_group(k, true), std::span<double>(w.data(), static_cast<std::size_t>(w.size())),
             std::span<const double>(g.mlp[k].weight.data(), static_cast<std::size_t>(g.mlp[k].weight.size())));
    opt.step(mlp_group(k, false), std::span<double>(bias.data(), static_cast<std::size_t>(bias.size())),
             std::span<const double>(g.mlp[k].bias.data(), static_cast<std::size_t>(g.mlp[k].bias.size())));
  }
  opt.step("embedding", b.cloud.params().embedding, g.embedding);
}

double position_scale(const TrainingConfig& config, double extent, double progress) {
  return extent * std::pow(config.lr.position_final_ratio, std::clamp(progress, 0.0, 1.0));
}

void densify_branch(BranchState& b, GradientStats& stats, const DensifyConfig& cfg, double extent,
                    std::uint64_t seed) {
  DensifyResult r = densify_and_prune(b.cloud, stats, cfg, extent, seed);
  for (const char* g : kRowGroups) {
    b.optimizer.remap_rows(g, row_width(b.cloud, g), r.source, r.fresh);
  }
  b.cloud = std::move(r.cloud);
  stats.reset(b.cloud.size());
}

double wall_ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string_view to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::static_init: return "static_init";
    case Stage::motion: return "motion";
    case Stage::finetune: return "finetune";
  }
  return "unknown";
}

Stage parse_stage(std::string_view name) {
  if (name == "static" || name == "static_init") return Stage::static_init;
  if (name == "motion") return Stage::motion;
  if (name == "finetune") return Stage::finetune;
  throw Error(ErrorKind::usage, "unknown stage '" + std::string(name) + "'");
}

void TrainingConfig::validate() const {
  if (face_splats == 0 || mouth_splats == 0) {
    throw Error(ErrorKind::configuration, "splat counts must be positive");
  }
  if (color_dim != 3 && color_dim != 12) throw Error(ErrorKind::configuration, "color_dim must be 3 or 12");
  if (!bounds.valid()) throw Error(ErrorKind::configuration, "scene bounds are empty");
  if (!(initial_opacity > 0.0 && initial_opacity < 1.0)) {
    throw Error(ErrorKind::configuration, "initial_opacity must lie in (0,1)");
  }
  if (dilation_radius < 0) throw Error(ErrorKind::configuration, "dilation_radius must be >= 0");
  if (eval_interval <= 0) throw Error(ErrorKind::configuration, "eval_interval must be positive");
  for (int n : iterations) {
    if (n < 0) throw Error(ErrorKind::configuration, "iteration counts must be >= 0");
  }
  encoder.validate();
  weights.validate();
  static_densify.validate();
  motion_densify.validate();
  const auto& r = lr;
  for (double v : {r.position, r.scale, r.rotation, r.opacity, r.color, r.field, r.field_weight_decay}) {
    if (!(v >= 0.0)) throw Error(ErrorKind::configuration, "learning rates must be >= 0");
  }
  if (!(r.position_final_ratio > 0.0)) {
    throw Error(ErrorKind::configuration, "position_final_ratio must be positive");
  }
}

void init_branch_optimizer(BranchState& b, const LearningRates& lr, double) {
  const std::size_t n = b.cloud.size();
  auto& opt = b.optimizer;
  opt.add_group("mu", {lr.position, 1e-15, 0.0}, 3 * n);
  opt.add_group("scale", {lr.scale, 1e-8, 0.0}, 3 * n);
  opt.add_group("rotation", {lr.rotation, 1e-8, 0.0}, 4 * n);
  opt.add_group("opacity", {lr.opacity, 1e-8, 0.0}, n);
  opt.add_group("color", {lr.color, 1e-8, 0.0}, b.cloud.color_dim() * n);
  const AdamGroupConfig field{lr.field, 1e-8, lr.field_weight_decay};
  opt.add_group("embedding", field, b.cloud.embedding_dim() * n);
  opt.add_group("tables", field, b.field.encoder().tables().size());
  const auto& layers = b.field.mlp().layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    opt.add_group(mlp_group(k, true), field, static_cast<std::size_t>(layers[k].weight.size()));
    opt.add_group(mlp_group(k, false), field, static_cast<std::size_t>(layers[k].bias.size()));
  }
}

TrainingState initial_state(const TrainingConfig& config, const ConditioningLayout& layout,
                            std::uint64_t seed) {
  config.validate();
  layout.validate();
  TrainingState s;
  s.seed = seed;
  s.layout = layout;
  s.scene_extent = 0.5 * config.bounds.diagonal();
  FieldConfig fc;
  fc.encoder = config.encoder;
  fc.mlp = config.mlp;
  fc.layout = {static_cast<int>(config.embedding_dim), layout.audio,
               layout.expression_feature_width()};
  for (Branch b : {Branch::face, Branch::mouth}) {
    RandomCloudOptions opts;
    opts.embedding_dim = config.embedding_dim;
    opts.color_dim = config.color_dim;
    opts.branch = b;
    opts.initial_opacity = config.initial_opacity;
    const bool face = b == Branch::face;
    BranchState& st = s.branch(b);
    st.cloud = init_random_cloud(face ? config.face_splats : config.mouth_splats, config.bounds,
                                 derive_seed(seed, face ? "cloud.face" : "cloud.mouth"), opts);
    st.field = DeformField(fc, config.bounds, derive_seed(seed, face ? "field.face" : "field.mouth"));
    init_branch_optimizer(st, config.lr, s.scene_extent);
  }
  return s;
}

Image branch_target(const FrameRecord& frame, Branch branch, int dilation_radius) {
  const Mask& base = branch == Branch::face ? frame.masks.face : frame.masks.mouth;
  const Mask m = dilate_mask(base, dilation_radius);
  const bool has_hair = frame.masks.hair.same_shape(m);
  Image out = frame.image;
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    const double keep = m.pixels[p] * (has_hair ? 1.0 - frame.masks.hair.pixels[p] : 1.0);
    for (int c = 0; c < out.channels; ++c) out.pixels[p * out.channels + c] *= keep;
  }
  return out;
}

PortraitRender render_frame(const TrainingState& state, const FrameRecord& frame, bool deform,
                            const RenderOptions& options) {
  const BranchView face{&state.face.cloud, deform ? &state.face.field : nullptr};
  const BranchView mouth{&state.mouth.cloud, deform ? &state.mouth.field : nullptr};
  return render_portrait(face, mouth, frame.conditioning, frame.image, frame.masks.hair, options);
}

BranchStepResult branch_step(BranchState& b, const ConditioningFrame& conditioning,
                             const Image& target, const Mask* jaw_mask, bool use_field,
                             bool update_cloud, const TrainingConfig& config, double scene_extent,
                             double progress, GradientStats* stats, LossDiagnostics* diagnostics) {
  BranchStepResult out;
  FieldForward ff;
  PrimitiveCloud deformed;
  if (use_field) {
    const auto fe = conditioning.expression_features();
    ff = predict_batch(b.field, b.cloud, conditioning.audio, fe);
    deformed = apply_deformation(b.cloud, ff.deltas);
  }
  out.render = render(use_field ? deformed : b.cloud, conditioning.camera, Vec3::Zero());
  Image grad;
  if (jaw_mask != nullptr) {
    out.loss = motion_loss(out.render.color, target, *jaw_mask, config.weights, &grad, diagnostics);
  } else {
    out.loss = finetune_loss(out.render.color, target, config.weights, nullptr, &grad);
  }
  RenderGradients rg = render_backward(out.render, grad);
  if (stats != nullptr) stats->accumulate(rg);

  if (use_field) {
    const auto n = static_cast<Eigen::Index>(b.cloud.size());
    Eigen::MatrixXd d(kDeltaWidth, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) {
        d(k, i) = rg.params.mu[3 * i + k];
        d(3 + k, i) = rg.params.raw_scale[3 * i + k];
      }
      for (int k = 0; k < 4; ++k) d(6 + k, i) = rg.params.raw_rotation[4 * i + k];
    }
    const FieldGradients fg = field_backward(b.field, ff, d);
    for (std::size_t i = 0; i < rg.params.mu.size(); ++i) rg.params.mu[i] += fg.mu[i];
    step_field(b, fg);
  }
  if (update_cloud) step_cloud(b, rg.params, position_scale(config, scene_extent, progress));
  return out;
}

StageReport run_stage(Stage stage, const TrainingConfig& config, const Dataset& dataset,
                      TrainingState& state) {
  config.validate();
  if (stage == Stage::motion && !state.completed[0]) {
    throw Error(ErrorKind::state, "motion stage requires a completed static_init checkpoint");
  }
  if (stage == Stage::finetune && !state.completed[1]) {
    throw Error(ErrorKind::state, "finetune stage requires a completed motion checkpoint");
  }
  if (dataset.frames.empty()) throw Error(ErrorKind::invalid_input, "dataset has no frames");
  if (!(dataset.manifest.layout == state.layout)) {
    throw Error(ErrorKind::dimension_mismatch, "dataset conditioning layout differs from the checkpoint");
  }

  StageReport report;
  report.stage = stage;
  const auto si = static_cast<std::size_t>(stage);
  const int iterations = config.iterations[si];
  const std::size_t skipped_before = state.face.optimizer.skipped_steps() + state.mouth.optimizer.skipped_steps();

  std::vector<std::array<Image, 2>> targets;
  if (stage != Stage::finetune) {
    targets.resize(dataset.frames.size());
    for (std::size_t f = 0; f < dataset.frames.size(); ++f) {
      targets[f][0] = branch_target(dataset.frames[f], Branch::face, config.dilation_radius);
      targets[f][1] = branch_target(dataset.frames[f], Branch::mouth, config.dilation_radius);
    }
  }

  std::mt19937_64 rng(derive_seed(state.seed, "frames." + std::string(to_string(stage))));
  std::uniform_int_distribution<std::size_t> pick(0, dataset.frames.size() - 1);
  std::array<GradientStats, 2> stats;
  stats[0].reset(state.face.cloud.size());
  stats[1].reset(state.mouth.cloud.size());
  const DensifyConfig& densify = stage == Stage::motion ? config.motion_densify : config.static_densify;
  RenderOptions eval_options;
  eval_options.retain_records = false;

  for (int it = 1; it <= iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t f = pick(rng);
    const FrameRecord& frame = dataset.frames[f];
    const double progress = iterations > 1 ? static_cast<double>(it - 1) / (iterations - 1) : 0.0;
    MetricsRow row;
    row.iteration = it;

    if (stage == Stage::finetune) {
      PortraitRender pr = render_frame(state, frame, true);
      Image grad;
      const LossBreakdown loss = finetune_loss(pr.image, frame.image, config.weights, nullptr, &grad);
      const FuseGradients fg = fuse_backward(pr.layers, grad);
      const RenderGradients gf = render_backward(pr.face.render, fg.face_color, &fg.face_opacity);
      const RenderGradients gm = render_backward(pr.mouth.render, fg.mouth_color);
      state.face.optimizer.step("color", state.face.cloud.params().color, gf.params.color);
      state.mouth.optimizer.step("color", state.mouth.cloud.params().color, gm.params.color);
      row.total_loss = loss.total;
      row.l1 = loss.l1;
      row.dssim = loss.dssim;
    } else {
      const bool motion = stage == Stage::motion;
      for (int bi = 0; bi < 2; ++bi) {
        const Branch b = bi == 0 ? Branch::face : Branch::mouth;
        BranchState& bs = state.branch(b);
        const BranchStepResult r = branch_step(
            bs, frame.conditioning, targets[f][static_cast<std::size_t>(bi)],
            motion ? &frame.masks.jaw : nullptr, motion, !motion || config.motion_updates_cloud,
            config, state.scene_extent, progress, &stats[static_cast<std::size_t>(bi)],
            &report.diagnostics);
        row.total_loss += r.loss.total;
        row.l1 += r.loss.l1;
        row.dssim += r.loss.dssim;
        row.jaw += r.loss.jaw;
        if (densify.due(it)) {
          const std::string stream = std::string("densify.") + std::string(to_string(b));
          densify_branch(bs, stats[static_cast<std::size_t>(bi)], densify, state.scene_extent,
                         derive_seed(state.seed, stream) + static_cast<std::uint64_t>(it));
        }
      }
    }

    if (it % config.eval_interval == 0 || it == iterations) {
      const PortraitRender pr = render_frame(state, frame, stage != Stage::static_init, eval_options);
      row.evaluated = true;
      row.psnr = metric_psnr(pr.image, frame.image);
      row.ssim = metric_ssim(pr.image, frame.image);
    }
    row.splat_count = state.face.cloud.size() + state.mouth.cloud.size();
    if (config.log_wall_time) row.wall_ms = wall_ms_since(t0);
    report.rows.push_back(row);
  }

  state.completed[si] = true;
  state.iterations_done[si] += static_cast<std::uint64_t>(iterations);
  report.skipped_steps = state.face.optimizer.skipped_steps() + state.mouth.optimizer.skipped_steps() - skipped_before;
  return report;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "iteration,total_loss,l1,dssim,jaw,psnr,ssim,splat_count,wall_ms\n";
  char buf[512];
  auto num = [](double v) {
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    char b[64];
    std::snprintf(b, sizeof b, "%.10g", v);
    return std::string(b);
  };
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%s,%s,%s,%s,%s,%s,%zu,%s\n", r.iteration,
                  num(r.total_loss).c_str(), num(r.l1).c_str(), num(r.dssim).c_str(),
                  num(r.jaw).c_str(), r.evaluated ? num(r.psnr).c_str() : "",
                  r.evaluated ? num(r.ssim).c_str() : "", r.splat_count, num(r.wall_ms).c_str());
    out += buf;
  }
  return out;
}

}  // namespace degs
