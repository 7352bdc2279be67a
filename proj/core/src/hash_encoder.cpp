// SPDX-License-Identifier: Apache-2.0
#include "degs/hash_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace degs {
namespace {

constexpr int kPlaneAxes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
constexpr std::uint64_t kPrimeU = 73856093ULL;
constexpr std::uint64_t kPrimeV = 19349663ULL;

}  // namespace

void HashEncoderConfig::validate() const {
  if (levels < 1 || features < 1 || log2_table_size < 1 || log2_table_size > 28 ||
      min_resolution < 1 || max_resolution < min_resolution) {
    throw Error(ErrorKind::configuration, "invalid hash encoder configuration");
  }
}

TriPlaneHashEncoder::TriPlaneHashEncoder(const HashEncoderConfig& config, const Aabb& bounds)
    : config_(config), bounds_(bounds) {
  config_.validate();
  if (!bounds_.valid()) throw Error(ErrorKind::configuration, "hash encoder bounds are empty");
  const double growth =
      config_.levels > 1
          ? std::exp((std::log(static_cast<double>(config_.max_resolution)) -
                      std::log(static_cast<double>(config_.min_resolution))) /
                     (config_.levels - 1))
          : 1.0;
  for (int l = 0; l < config_.levels; ++l) {
    const double n = config_.min_resolution * std::pow(growth, l);
    resolutions_.push_back(std::max(1, static_cast<int>(std::floor(n + 1e-9))));
  }
  tables_.assign(3 * static_cast<std::size_t>(config_.levels) * table_size() * config_.features,
                 0.0);
}

void TriPlaneHashEncoder::init_uniform(std::uint64_t seed, double half_range) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-half_range, half_range);
  for (auto& v : tables_) v = dist(rng);
}

std::uint32_t TriPlaneHashEncoder::vertex_row(int plane, int level, int i, int j) const {
  const auto n = static_cast<std::uint64_t>(resolutions_[static_cast<std::size_t>(level)]) + 1;
  const std::uint64_t t = table_size();
  std::uint64_t local;
  if (n * n <= t) {
    local = static_cast<std::uint64_t>(i) + static_cast<std::uint64_t>(j) * n;
  } else {
    local = ((static_cast<std::uint64_t>(i) * kPrimeU) ^ (static_cast<std::uint64_t>(j) * kPrimeV)) &
            (t - 1);
  }
  const std::uint64_t block = static_cast<std::uint64_t>(plane) * config_.levels + level;
  return static_cast<std::uint32_t>(block * t + local);
}

bool TriPlaneHashEncoder::encode(const Vec3& mu, double* out, EncodeTrace* trace) const {
  Vec3 u;
  bool clamped = false;
  Vec3 du = Vec3::Zero();
  for (int a = 0; a < 3; ++a) {
    const double span = bounds_.hi[a] - bounds_.lo[a];
    double v = (mu[a] - bounds_.lo[a]) / span;
    if (!(v >= 0.0) || !(v <= 1.0)) {
      clamped = true;
      v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    } else {
      du[a] = 1.0 / span;
    }
    u[a] = v;
  }
  if (trace) {
    trace->cells.resize(3 * static_cast<std::size_t>(config_.levels));
    trace->du_dmu = du;
  }

  const int f_width = config_.features;
  for (int plane = 0; plane < 3; ++plane) {
    const double pu = u[kPlaneAxes[plane][0]];
    const double pv = u[kPlaneAxes[plane][1]];
    for (int level = 0; level < config_.levels; ++level) {
      const int n = resolutions_[static_cast<std::size_t>(level)];
      const double gu = pu * n, gv = pv * n;
      const int i = std::min(static_cast<int>(gu), n - 1);
      const int j = std::min(static_cast<int>(gv), n - 1);
      const double fu = gu - i, fv = gv - j;
      const std::array<std::uint32_t, 4> rows = {
          vertex_row(plane, level, i, j), vertex_row(plane, level, i + 1, j),
          vertex_row(plane, level, i, j + 1), vertex_row(plane, level, i + 1, j + 1)};
      const double w[4] = {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv};
      double* dst = out + (static_cast<std::size_t>(plane) * config_.levels + level) * f_width;
      for (int f = 0; f < f_width; ++f) {
        double acc = 0.0;
        for (int c = 0; c < 4; ++c) acc += w[c] * tables_[static_cast<std::size_t>(rows[c]) * f_width + f];
        dst[f] = acc;
      }
      if (trace) {
        trace->cells[static_cast<std::size_t>(plane) * config_.levels + level] = {rows, fu, fv};
      }
    }
  }
  return clamped;
}

Vec3 TriPlaneHashEncoder::backward(const EncodeTrace& trace, const double* d_out,
                                   double* d_tables) const {
  Vec3 d_u = Vec3::Zero();
  const int f_width = config_.features;
  for (int plane = 0; plane < 3; ++plane) {
    for (int level = 0; level < config_.levels; ++level) {
      const std::size_t cell = static_cast<std::size_t>(plane) * config_.levels + level;
      const PlaneLevelTrace& c = trace.cells[cell];
      const double fu = c.fu, fv = c.fv;
      const double w[4] = {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv};
      const double* g = d_out + cell * f_width;
      const double n = resolutions_[static_cast<std::size_t>(level)];
      double d_fu = 0.0, d_fv = 0.0;
      for (int f = 0; f < f_width; ++f) {
        if (g[f] == 0.0) continue;
        double r[4];
        for (int k = 0; k < 4; ++k) {
          const std::size_t idx = static_cast<std::size_t>(c.rows[k]) * f_width + f;
          if (d_tables) d_tables[idx] += w[k] * g[f];
          r[k] = tables_[idx];
        }
        d_fu += g[f] * ((1 - fv) * (r[1] - r[0]) + fv * (r[3] - r[2]));
        d_fv += g[f] * ((1 - fu) * (r[2] - r[0]) + fu * (r[3] - r[1]));
      }
      d_u[kPlaneAxes[plane][0]] += d_fu * n;
      d_u[kPlaneAxes[plane][1]] += d_fv * n;
    }
  }
  return d_u.cwiseProduct(trace.du_dmu);
}

}  // namespace degs
