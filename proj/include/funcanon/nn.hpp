#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "funcanon/io.hpp"

namespace funcanon {

using Matrix = Eigen::MatrixXd;

// Fully connected network with tanh hidden units and a linear output layer. Parameters
// live in one flat buffer: per layer, the weight matrix (column-major) then the bias.
class Mlp {
 public:
  Mlp() = default;
  // widths = {input, hidden..., output}; at least {input, output}.
  Mlp(std::vector<int> widths, std::uint64_t seed);

  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  // Columns are samples.
  Matrix forward(const Matrix& x) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer (post-activation of the previous one)
  };
  Matrix forward(const Matrix& x, Cache& cache) const;
  // Accumulates dLoss/dparams into `grad` (same layout as parameters()) given dLoss/doutput.
  void backward(const Cache& cache, const Matrix& grad_output, std::span<double> grad) const;

  json to_json() const;
  static Mlp from_json(const json& j);

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + static_cast<std::size_t>(widths_[layer + 1]) * widths_[layer];
  }
  void build_offsets();

  std::vector<int> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::size_t n, AdamWOptions options) : options_(options), m_(n, 0.0), v_(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grad);
  int steps() const { return t_; }

 private:
  AdamWOptions options_;
  std::vector<double> m_;
  std::vector<double> v_;
  int t_ = 0;
};

}  // namespace funcanon
