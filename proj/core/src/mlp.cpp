// SPDX-License-Identifier: Apache-2.0
#include "degs/mlp.hpp"

#include <cmath>
#include <random>

namespace degs {

Mlp::Mlp(int input_width, int output_width, const MlpConfig& config, std::uint64_t seed)
    : input_width_(input_width), output_width_(output_width) {
  if (input_width < 1 || output_width < 1 || config.hidden_width < 1 || config.hidden_layers < 0) {
    throw Error(ErrorKind::configuration, "invalid MLP shape");
  }
  std::mt19937_64 rng(seed);
  int fan_in = input_width;
  for (int l = 0; l < config.hidden_layers; ++l) {
    const int fan_out = config.hidden_width;
    // Xavier/Glorot uniform.
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = dist(rng);
    }
    layers_.push_back(std::move(layer));
    fan_in = fan_out;
  }
  layers_.push_back(
      {Eigen::MatrixXd::Zero(output_width, fan_in), Eigen::VectorXd::Zero(output_width)});
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, MlpTrace* trace) const {
  if (x.rows() != input_width_) {
    throw Error(ErrorKind::configuration, "MLP expects input width " +
                                              std::to_string(input_width_) + ", got " +
                                              std::to_string(x.rows()));
  }
  if (trace) trace->inputs.clear();
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (trace) trace->inputs.push_back(h);
    Eigen::MatrixXd z = layers_[l].weight * h;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.array().tanh();
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const MlpTrace& trace, const Eigen::MatrixXd& d_out,
                              std::vector<DenseLayer>& grads) const {
  Eigen::MatrixXd g = d_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Eigen::MatrixXd& in = trace.inputs[k];
    grads[k].weight.noalias() += g * in.transpose();
    grads[k].bias += g.rowwise().sum();
    g = layers_[k].weight.transpose() * g;
    if (k > 0) {
      // `in` is tanh output of the previous layer.
      g.array() *= 1.0 - in.array().square();
    }
  }
  return g;
}

std::vector<DenseLayer> Mlp::zero_gradients() const {
  std::vector<DenseLayer> g;
  g.reserve(layers_.size());
  for (const auto& l : layers_) {
    g.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                 Eigen::VectorXd::Zero(l.bias.size())});
  }
  return g;
}

}  // namespace degs
