#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "funcanon/io.hpp"

namespace funcanon {

/// Linear beta schedule with cumulative alpha products and a strided inference subset.
struct DiffusionSchedule {
  int t_train = 100;
  int t_infer = 10;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  // Throws kInvalidArgument unless t_infer divides t_train and betas lie in (0, 1).
  static DiffusionSchedule linear(int t_train = 100, int t_infer = 10, double beta_start = 1e-4,
                                  double beta_end = 2e-2);
  void validate() const;

  // Descending: (t_infer-1)*k, ..., k, 0 with k = t_train / t_infer.
  std::vector<int> inference_timesteps() const;
  std::vector<int> full_timesteps() const;
  // alpha_bar for the step after t; 1 past the end of the chain.
  double alpha_bar_prev(const std::vector<int>& timesteps, std::size_t i) const;

  json to_json() const;
  static DiffusionSchedule from_json(const json& j);
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise. Throws kInvalidArgument for t outside
// [0, t_train) or a noise shape mismatch.
Eigen::VectorXd q_sample(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& noise,
                         const DiffusionSchedule& schedule);

using NoisePredictor = std::function<Eigen::VectorXd(const Eigen::VectorXd& x_t, int t)>;

// Deterministic DDIM (eta = 0) from x_T ~ N(0, I) drawn with `seed`, over `timesteps`.
Eigen::VectorXd ddim_sample(const NoisePredictor& predict, Eigen::Index dim, const DiffusionSchedule& schedule,
                            const std::vector<int>& timesteps, std::uint64_t seed);
// Same, starting from a given x_T.
Eigen::VectorXd ddim_from(const NoisePredictor& predict, Eigen::VectorXd x, const DiffusionSchedule& schedule,
                          const std::vector<int>& timesteps);

}  // namespace funcanon
