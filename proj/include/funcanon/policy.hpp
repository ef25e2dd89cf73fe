#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "funcanon/diffusion.hpp"
#include "funcanon/error.hpp"
#include "funcanon/geometry.hpp"
#include "funcanon/nn.hpp"
#include "funcanon/recognition.hpp"

namespace funcanon {

// What the network output means. The denoiser always returns predicted noise; with
// kSample the network predicts x0 and noise follows from x_t.
enum class Prediction { kEpsilon, kSample };
std::string prediction_name(Prediction p);
Prediction parse_prediction(const std::string& text);

struct PolicyDims {
  int pose_width = 64;   // h_delta
  int feature_dim = 32;  // f_A, f_O
  int verb_dim = 32;     // v
  int horizon = 8;       // waypoints per action chunk
  int time_dim = 16;     // sinusoidal timestep embedding
  int encoder_hidden = 64;
  std::vector<int> hidden = {128, 128};
  Prediction prediction = Prediction::kSample;

  int state_dim() const { return pose_width + 2 * feature_dim + verb_dim; }
  int chunk_dim() const { return horizon * kWaypointWidth; }
  // translation (3) + axis-angle (3) + gripper (1)
  static constexpr int kWaypointWidth = 7;

  json to_json() const;
  static PolicyDims from_json(const json& j);
};

/// s = (h_delta, f_A, f_O, v).
struct PolicyState {
  Eigen::VectorXd h_delta;
  Eigen::VectorXd f_actor;
  Eigen::VectorXd f_object;
  Eigen::VectorXd verb;

  Eigen::VectorXd concat() const;
  json to_json() const;
  static PolicyState from_json(const json& j);
};

// Rotation row-major then translation of inv(object_pose) * actor_pose.
std::array<double, 12> relative_pose_vector(const SE3Pose& actor_pose, const SE3Pose& object_pose);

// Fixed unit-scale embedding seeded by a hash of `id`.
Eigen::VectorXd stub_embedding(const std::string& id, int dim, std::uint64_t salt = 0);

/// Three-layer pose perceptron plus verb lookup table. Weights are fixed at construction.
class StateEncoder {
 public:
  StateEncoder() = default;
  StateEncoder(const PolicyDims& dims, const Vocabulary& vocabulary, std::uint64_t seed);

  Eigen::VectorXd encode_pose(const SE3Pose& actor_pose, const SE3Pose& object_pose) const;
  // Throws kVocabularyError for verbs outside the table.
  const Eigen::VectorXd& verb_embedding(const std::string& verb) const;
  const Mlp& pose_network() const { return pose_mlp_; }
  const std::map<std::string, Eigen::VectorXd>& verb_table() const { return verbs_; }

  json to_json() const;
  static StateEncoder from_json(const json& j);

 private:
  Mlp pose_mlp_;
  std::map<std::string, Eigen::VectorXd> verbs_;
};

PolicyState encode_state(const StateEncoder& encoder, const SE3Pose& actor_pose, const SE3Pose& object_pose,
                         const Eigen::VectorXd& f_actor, const Eigen::VectorXd& f_object, const std::string& verb);

Eigen::VectorXd timestep_embedding(int t, int dim);

/// eps_hat(x_t, s, t): MLP over concat(x_t, s, embed(t)).
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const PolicyDims& dims, std::uint64_t seed);
  // Explicit hidden widths; empty gives a linear model.
  Denoiser(const PolicyDims& dims, std::vector<int> hidden, std::uint64_t seed);

  // Predicted noise eps_hat(x_t, s, t).
  Eigen::VectorXd predict(const Eigen::VectorXd& x_t, const PolicyState& state, int t,
                          const DiffusionSchedule& schedule) const;
  Matrix input_matrix(const std::vector<Eigen::VectorXd>& x_t, const std::vector<Eigen::VectorXd>& states,
                      const std::vector<int>& t) const;

  Mlp& network() { return net_; }
  const Mlp& network() const { return net_; }
  const PolicyDims& dims() const { return dims_; }
  std::size_t parameter_count() const { return net_.parameter_count(); }

  json to_json() const;
  static Denoiser from_json(const json& j, const PolicyDims& dims);

 private:
  PolicyDims dims_;
  Mlp net_;
};

// Resamples `trajectory` to `horizon` waypoints and expresses each relative to the
// functional center `center`: (translation - center, log(R), gripper).
Eigen::VectorXd encode_chunk(const Trajectory& trajectory, const Vec3& center, int horizon);
Trajectory decode_chunk(const Eigen::VectorXd& chunk, const Vec3& center, FrameTag frame);

struct TrainingExample {
  PolicyState state;
  Eigen::VectorXd chunk;
};

// Per-dimension affine map of action chunks onto [-1, 1] from the training range.
struct ActionNormalizer {
  Eigen::VectorXd center;
  Eigen::VectorXd half_range;  // floored at kMinHalfRange

  static constexpr double kMinHalfRange = 1e-3;
  static ActionNormalizer identity(int dim);
  static ActionNormalizer fit(const std::vector<TrainingExample>& dataset);
  Eigen::VectorXd normalize(const Eigen::VectorXd& chunk) const;
  Eigen::VectorXd denormalize(const Eigen::VectorXd& z) const;
  json to_json() const;
  static ActionNormalizer from_json(const json& j);
};

struct TrainConfig {
  double lr = 1e-4;
  int batch = 64;
  int epochs = 500;
  int t_train = 100;
  int t_infer = 10;
  double weight_decay = 0.01;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  bool normalize_actions = true;
  PolicyDims dims;

  DiffusionSchedule schedule() const;
  json to_json() const;
  // Missing keys keep their defaults; unknown keys throw kParseError.
  static TrainConfig from_json(const json& j);
};

struct TrainResult {
  Denoiser denoiser;
  std::vector<double> loss_curve;  // mean loss per epoch
  ActionNormalizer normalizer;     // identity unless normalize_actions
};

// Mean squared noise-prediction error and its gradient over one batch.
double denoising_loss(const Denoiser& denoiser, const std::vector<const TrainingExample*>& batch,
                      const std::vector<int>& t, const std::vector<Eigen::VectorXd>& noise, const DiffusionSchedule& s,
                      std::vector<double>* grad);

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(Denoiser last_good, int epoch)
      : Error(ErrorCode::kTrainingDiverged, "non-finite loss at epoch " + std::to_string(epoch)),
        last_good_(std::move(last_good)),
        epoch_(epoch) {}
  const Denoiser& last_good() const { return last_good_; }
  int epoch() const { return epoch_; }

 private:
  Denoiser last_good_;
  int epoch_;
};

// AdamW on the denoising objective. Deterministic for fixed (dataset, config, seed).
// When the dataset is smaller than a batch, examples are cycled to fill it.
TrainResult train(const std::vector<TrainingExample>& dataset, const TrainConfig& config, std::uint64_t seed,
                  std::optional<Denoiser> initial = std::nullopt);

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  int checked = 0;
};

// Central differences with step h on `count` distinct random parameters. Relative error
// is |a - n| / max(|a|, |n|), taken as 0 when both are 0.
GradCheckResult grad_check(const Denoiser& denoiser, const TrainingExample& sample, int t,
                           const Eigen::VectorXd& noise, const DiffusionSchedule& schedule, int count = 50,
                           double h = 1e-5, std::uint64_t seed = 0);

/// Everything needed to sample actions: encoder, denoiser, schedule.
struct PolicyCheckpoint {
  static constexpr int kVersion = 1;
  PolicyDims dims;
  DiffusionSchedule schedule;
  StateEncoder encoder;
  Denoiser denoiser;
  TrainConfig config;
  std::vector<double> loss_curve;
  ActionNormalizer normalizer;

  json to_json() const;
  static PolicyCheckpoint from_json(const json& j);
};

// DDIM sample mapped back to chunk units.
Eigen::VectorXd sample_action(const PolicyCheckpoint& checkpoint, const PolicyState& state, std::uint64_t seed);

Eigen::VectorXd ddim_sample(const PolicyState& state, const Denoiser& denoiser, const DiffusionSchedule& schedule,
                            std::uint64_t seed);
Eigen::VectorXd ddim_sample(const PolicyState& state, const Denoiser& denoiser, const DiffusionSchedule& schedule,
                            const std::vector<int>& timesteps, std::uint64_t seed);

}  // namespace funcanon
