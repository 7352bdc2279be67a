// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/common.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace degs {

struct MlpConfig {
  int hidden_width = 64;
  int hidden_layers = 3;
  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
           a.weight == b.weight && a.bias.size() == b.bias.size() && a.bias == b.bias;
  }
};

/// Activations kept for the backward pass, one column per sample.
struct MlpTrace {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
};

/// tanh hidden layers, linear output layer initialized to zero.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int input_width, int output_width, const MlpConfig& config, std::uint64_t seed);

  int input_width() const noexcept { return input_width_; }
  int output_width() const noexcept { return output_width_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  /// x is input_width x batch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, MlpTrace* trace = nullptr) const;

  /// Returns dL/dx; accumulates parameter gradients into `grads` (shaped like layers()).
  Eigen::MatrixXd backward(const MlpTrace& trace, const Eigen::MatrixXd& d_out,
                           std::vector<DenseLayer>& grads) const;

  std::vector<DenseLayer> zero_gradients() const;

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  int input_width_ = 0;
  int output_width_ = 0;
  std::vector<DenseLayer> layers_;
};

}  // namespace degs
