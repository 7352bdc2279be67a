// SPDX-License-Identifier: Apache-2.0
#include "degs/optimizer.hpp"

#include <cmath>

namespace degs {

void AdamOptimizer::add_group(const std::string& name, const AdamGroupConfig& config,
                              std::size_t size) {
  if (!(config.learning_rate >= 0.0) || !(config.epsilon > 0.0) || !(config.weight_decay >= 0.0)) {
    throw Error(ErrorKind::configuration, "invalid optimizer settings for group '" + name + "'");
  }
  AdamGroup g;
  g.config = config;
  g.m.assign(size, 0.0);
  g.v.assign(size, 0.0);
  groups_[name] = std::move(g);
}

AdamGroup& AdamOptimizer::group(const std::string& name) {
  auto it = groups_.find(name);
  if (it == groups_.end()) throw Error(ErrorKind::state, "unknown optimizer group '" + name + "'");
  return it->second;
}

const AdamGroup& AdamOptimizer::group(const std::string& name) const {
  auto it = groups_.find(name);
  if (it == groups_.end()) throw Error(ErrorKind::state, "unknown optimizer group '" + name + "'");
  return it->second;
}

bool AdamOptimizer::step(const std::string& name, std::span<double> params,
                         std::span<const double> grads, double lr_scale) {
  AdamGroup& g = group(name);
  if (params.size() != grads.size() || params.size() != g.m.size()) {
    throw Error(ErrorKind::dimension_mismatch,
                "optimizer group '" + name + "' holds " + std::to_string(g.m.size()) +
                    " values, got params " + std::to_string(params.size()) + " and grads " +
                    std::to_string(grads.size()));
  }
  for (double x : grads) {
    if (!std::isfinite(x)) {
      ++skipped_steps_;
      return false;
    }
  }
  ++g.step;
  const double lr = g.config.learning_rate * lr_scale;
  const double t = static_cast<double>(g.step);
  const double bc1 = 1.0 - std::pow(kBeta1, t);
  const double bc2 = 1.0 - std::pow(kBeta2, t);
  const double eps = g.config.epsilon;
  const double decay = 1.0 - lr * g.config.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double gi = grads[i];
    g.m[i] = kBeta1 * g.m[i] + (1.0 - kBeta1) * gi;
    g.v[i] = kBeta2 * g.v[i] + (1.0 - kBeta2) * gi * gi;
    const double m_hat = g.m[i] / bc1;
    const double v_hat = g.v[i] / bc2;
    if (g.config.weight_decay > 0.0) params[i] *= decay;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
  return true;
}

void AdamOptimizer::remap_rows(const std::string& name, std::size_t row_width,
                               const std::vector<std::size_t>& source,
                               const std::vector<std::uint8_t>& fresh) {
  AdamGroup& g = group(name);
  if (source.size() != fresh.size()) {
    throw Error(ErrorKind::invalid_input, "remap_rows: source and fresh lengths differ");
  }
  if (row_width == 0) return;
  const std::size_t old_rows = g.m.size() / row_width;
  std::vector<double> m(source.size() * row_width, 0.0), v(source.size() * row_width, 0.0);
  for (std::size_t k = 0; k < source.size(); ++k) {
    if (fresh[k]) continue;
    if (source[k] >= old_rows) {
      throw Error(ErrorKind::invalid_input, "remap_rows: source row out of range");
    }
    for (std::size_t j = 0; j < row_width; ++j) {
      m[k * row_width + j] = g.m[source[k] * row_width + j];
      v[k * row_width + j] = g.v[source[k] * row_width + j];
    }
  }
  g.m = std::move(m);
  g.v = std::move(v);
}

}  // namespace degs
