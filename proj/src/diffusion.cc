#include "funcanon/diffusion.hpp"

#include <cmath>

#include "funcanon/error.hpp"
#include "funcanon/random.hpp"

namespace funcanon {

DiffusionSchedule DiffusionSchedule::linear(int t_train, int t_infer, double beta_start, double beta_end) {
  DiffusionSchedule s;
  s.t_train = t_train;
  s.t_infer = t_infer;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  if (t_train < 1) throw Error(ErrorCode::kInvalidArgument, "t_train must be positive");
  double prod = 1.0;
  for (int t = 0; t < t_train; ++t) {
    const double beta = t_train == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (t_train - 1);
    s.betas.push_back(beta);
    prod *= 1.0 - beta;
    s.alpha_bars.push_back(prod);
  }
  s.validate();
  return s;
}

void DiffusionSchedule::validate() const {
  if (t_train < 1 || t_infer < 1 || t_infer > t_train || t_train % t_infer != 0) {
    throw Error(ErrorCode::kInvalidArgument, "t_infer must divide t_train");
  }
  if (static_cast<int>(betas.size()) != t_train || static_cast<int>(alpha_bars.size()) != t_train) {
    throw Error(ErrorCode::kInvalidArgument, "schedule length differs from t_train");
  }
  double prev = 1.0;
  for (int t = 0; t < t_train; ++t) {
    if (!(betas[t] > 0.0 && betas[t] < 1.0)) throw Error(ErrorCode::kInvalidArgument, "beta outside (0,1)");
    if (!(alpha_bars[t] > 0.0 && alpha_bars[t] < prev)) {
      throw Error(ErrorCode::kInvalidArgument, "alpha_bar must be strictly decreasing in (0,1]");
    }
    prev = alpha_bars[t];
  }
}

std::vector<int> DiffusionSchedule::inference_timesteps() const {
  const int stride = t_train / t_infer;
  std::vector<int> out;
  for (int i = t_infer - 1; i >= 0; --i) out.push_back(i * stride);
  return out;
}

std::vector<int> DiffusionSchedule::full_timesteps() const {
  std::vector<int> out;
  for (int t = t_train - 1; t >= 0; --t) out.push_back(t);
  return out;
}

double DiffusionSchedule::alpha_bar_prev(const std::vector<int>& timesteps, std::size_t i) const {
  return i + 1 < timesteps.size() ? alpha_bars[timesteps[i + 1]] : 1.0;
}

json DiffusionSchedule::to_json() const {
  return {{"t_train", t_train}, {"t_infer", t_infer}, {"beta_start", beta_start}, {"beta_end", beta_end}};
}

DiffusionSchedule DiffusionSchedule::from_json(const json& j) {
  try {
    return linear(j.at("t_train").get<int>(), j.at("t_infer").get<int>(), j.at("beta_start").get<double>(),
                  j.at("beta_end").get<double>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("schedule: ") + e.what());
  }
}

Eigen::VectorXd q_sample(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& noise,
                         const DiffusionSchedule& schedule) {
  if (t < 0 || t >= schedule.t_train) throw Error(ErrorCode::kInvalidArgument, "timestep out of range");
  if (noise.size() != x0.size()) throw Error(ErrorCode::kInvalidArgument, "noise shape differs from x0");
  const double ab = schedule.alpha_bars[t];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

Eigen::VectorXd ddim_from(const NoisePredictor& predict, Eigen::VectorXd x, const DiffusionSchedule& schedule,
                          const std::vector<int>& timesteps) {
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    const int t = timesteps[i];
    const double ab = schedule.alpha_bars.at(t);
    const double ab_prev = schedule.alpha_bar_prev(timesteps, i);
    const Eigen::VectorXd eps = predict(x, t);
    const Eigen::VectorXd x0_pred = (x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
    x = std::sqrt(ab_prev) * x0_pred + std::sqrt(1.0 - ab_prev) * eps;
  }
  return x;
}

Eigen::VectorXd ddim_sample(const NoisePredictor& predict, Eigen::Index dim, const DiffusionSchedule& schedule,
                            const std::vector<int>& timesteps, std::uint64_t seed) {
  schedule.validate();
  Rng rng(seed);
  return ddim_from(predict, rng.normal_vector(dim), schedule, timesteps);
}

}  // namespace funcanon
