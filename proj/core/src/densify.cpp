// SPDX-License-Identifier: Apache-2.0
#include "degs/densify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace degs {

void DensifyConfig::validate() const {
  if (interval <= 0 || split_children < 1 || !(split_scale_divisor > 0.0) ||
      !(grad_threshold >= 0.0) || !(percent_dense >= 0.0) || !(max_world_size > 0.0)) {
    throw Error(ErrorKind::configuration, "invalid densification settings");
  }
}

bool DensifyConfig::due(int iteration) const noexcept {
  return enabled && iteration >= start_iteration && iteration <= stop_iteration &&
         iteration % interval == 0;
}

void GradientStats::reset(std::size_t rows) {
  accum.assign(rows, 0.0);
  count.assign(rows, 0);
}

void GradientStats::accumulate(const RenderGradients& grads) {
  if (accum.size() != grads.visible.size()) reset(grads.visible.size());
  for (std::size_t i = 0; i < accum.size(); ++i) {
    if (!grads.visible[i]) continue;
    accum[i] += grads.mean2d_grad_norm[i];
    ++count[i];
  }
}

DensifyResult densify_and_prune(const PrimitiveCloud& cloud, const GradientStats& stats,
                                const DensifyConfig& config, double scene_extent,
                                std::uint64_t seed) {
  config.validate();
  const std::size_t n = cloud.size();
  if (stats.accum.size() != n) {
    throw Error(ErrorKind::dimension_mismatch,
                "gradient statistics cover " + std::to_string(stats.accum.size()) +
                    " primitives, cloud has " + std::to_string(n));
  }
  enum class Fate { keep, prune, clone, split };
  std::vector<Fate> fate(n, Fate::keep);
  const double dense_size = config.percent_dense * scene_extent;
  const double big_size = config.max_world_size * scene_extent;
  for (std::size_t i = 0; i < n; ++i) {
    const double opacity = sigmoid(cloud.raw_opacity(i));
    const double max_scale = cloud.raw_scale(i).array().exp().maxCoeff();
    if (opacity < config.min_opacity || max_scale > big_size) {
      fate[i] = Fate::prune;
    } else if (stats.mean(i) >= config.grad_threshold && stats.count[i] > 0) {
      fate[i] = max_scale > dense_size ? Fate::split : Fate::clone;
    }
  }

  // Growth cap: lowest-gradient candidates are demoted back to keep.
  if (config.max_primitives > 0) {
    std::vector<std::size_t> cand;
    std::size_t base = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (fate[i] == Fate::keep) ++base;
      if (fate[i] == Fate::clone) base += 1, cand.push_back(i);
      if (fate[i] == Fate::split) cand.push_back(i);
    }
    std::stable_sort(cand.begin(), cand.end(),
                     [&](std::size_t a, std::size_t b) { return stats.mean(a) > stats.mean(b); });
    std::size_t total = base;
    for (std::size_t i : cand) {
      const std::size_t extra = fate[i] == Fate::clone ? 1 : static_cast<std::size_t>(config.split_children);
      if (total + extra > config.max_primitives) {
        if (fate[i] == Fate::split) ++total;
        fate[i] = Fate::keep;
      } else {
        total += extra;
      }
    }
  }

  DensifyResult out;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (fate[i] == Fate::keep || fate[i] == Fate::clone) rows.push_back(i);
    if (fate[i] == Fate::prune) ++out.pruned;
  }
  std::size_t children = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (fate[i] == Fate::clone) ++children;
    if (fate[i] == Fate::split) children += static_cast<std::size_t>(config.split_children);
  }
  if (rows.empty() && children == 0) {
    throw Error(ErrorKind::invalid_input, "densify_and_prune would leave the cloud empty");
  }

  out.cloud = cloud.select(rows);
  out.source = rows;
  out.fresh.assign(rows.size(), 0);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto sample_offset = [&](const GaussianPrimitive& p) {
    const auto act = activate_parameters(p.raw_scale, p.raw_rotation, p.raw_opacity);
    Vec3 z;
    for (int k = 0; k < 3; ++k) z[k] = normal(rng);
    return Vec3(rotation_matrix(act.rotation) * act.scale.cwiseProduct(z));
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (fate[i] != Fate::clone) continue;
    GaussianPrimitive p = cloud.primitive(i);
    p.mu += sample_offset(p);
    out.cloud.push_back(p);
    out.source.push_back(i);
    out.fresh.push_back(1);
    ++out.cloned;
  }
  const double shrink = std::log(config.split_scale_divisor);
  for (std::size_t i = 0; i < n; ++i) {
    if (fate[i] != Fate::split) continue;
    const GaussianPrimitive parent = cloud.primitive(i);
    for (int c = 0; c < config.split_children; ++c) {
      GaussianPrimitive child = parent;
      child.mu = parent.mu + sample_offset(parent);
      child.raw_scale = parent.raw_scale.array() - shrink;
      out.cloud.push_back(child);
      out.source.push_back(i);
      out.fresh.push_back(1);
    }
    ++out.split;
  }
  return out;
}

}  // namespace degs
