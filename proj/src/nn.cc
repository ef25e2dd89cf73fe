#include "funcanon/nn.hpp"

#include <cmath>

#include "funcanon/error.hpp"
#include "funcanon/random.hpp"

namespace funcanon {

Mlp::Mlp(std::vector<int> widths, std::uint64_t seed) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw Error(ErrorCode::kInvalidArgument, "mlp needs input and output widths");
  for (int w : widths_) {
    if (w < 1) throw Error(ErrorCode::kInvalidArgument, "mlp widths must be positive");
  }
  build_offsets();
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const double bound = std::sqrt(6.0 / (widths_[l] + widths_[l + 1]));
    const std::size_t n = static_cast<std::size_t>(widths_[l + 1]) * widths_[l];
    for (std::size_t i = 0; i < n; ++i) params_[weight_offset(l) + i] = rng.uniform(-bound, bound);
  }
}

void Mlp::build_offsets() {
  offsets_.clear();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(widths_[l + 1]) * (widths_[l] + 1);
  }
  params_.assign(total, 0.0);
}

Matrix Mlp::forward(const Matrix& x) const {
  Cache unused;
  return forward(x, unused);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  Matrix m = x;
  return forward(m).col(0);
}

Matrix Mlp::forward(const Matrix& x, Cache& cache) const {
  if (x.rows() != widths_.front()) throw Error(ErrorCode::kInvalidArgument, "mlp input width mismatch");
  cache.inputs.clear();
  Matrix a = x;
  const std::size_t layers = widths_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::Map<const Matrix> w(params_.data() + weight_offset(l), widths_[l + 1], widths_[l]);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + bias_offset(l), widths_[l + 1]);
    cache.inputs.push_back(a);
    Matrix z = w * a;
    z.colwise() += b;
    a = l + 1 < layers ? Matrix(z.array().tanh()) : z;
  }
  return a;
}

void Mlp::backward(const Cache& cache, const Matrix& grad_output, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw Error(ErrorCode::kInvalidArgument, "gradient buffer size mismatch");
  Matrix delta = grad_output;
  for (std::size_t l = widths_.size() - 1; l-- > 0;) {
    Eigen::Map<const Matrix> w(params_.data() + weight_offset(l), widths_[l + 1], widths_[l]);
    Eigen::Map<Matrix> gw(grad.data() + weight_offset(l), widths_[l + 1], widths_[l]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + bias_offset(l), widths_[l + 1]);
    const Matrix& a = cache.inputs[l];
    gw.noalias() += delta * a.transpose();
    gb += delta.rowwise().sum();
    if (l > 0) {
      // a = tanh(z) for hidden layers, so tanh'(z) = 1 - a^2.
      delta = (w.transpose() * delta).array() * (1.0 - a.array().square());
    }
  }
}

json Mlp::to_json() const { return {{"widths", widths_}, {"parameters", params_}}; }

Mlp Mlp::from_json(const json& j) {
  Mlp m;
  try {
    m.widths_ = j.at("widths").get<std::vector<int>>();
    m.build_offsets();
    auto params = j.at("parameters").get<std::vector<double>>();
    if (params.size() != m.params_.size()) throw Error(ErrorCode::kParseError, "mlp parameter count mismatch");
    m.params_ = std::move(params);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("mlp: ") + e.what());
  }
  return m;
}

void AdamW::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, t_);
  const double c2 = 1.0 - std::pow(b2, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double update = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + options_.eps);
    params[i] -= options_.lr * (update + options_.weight_decay * params[i]);
  }
}

}  // namespace funcanon
