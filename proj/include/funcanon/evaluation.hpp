#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "funcanon/decomposition.hpp"
#include "funcanon/policy.hpp"
#include "funcanon/transfer.hpp"

namespace funcanon {

enum class VariationLevel { kPose, kInstance, kCategory };
std::string variation_name(VariationLevel v);
VariationLevel parse_variation(const std::string& text);

struct Tolerances {
  double position = 0.02;    // meters
  double orientation = 0.1;  // radians
};

struct Scenario {
  std::string scenario_id;
  TaskPlan plan;
  std::map<std::string, SE3Pose> placements;  // world poses of normalized models and the gripper
  VariationLevel variation = VariationLevel::kPose;
  Tolerances tolerances;

  // Throws kInvalidArgument for unplaced actors/objects or non-positive tolerances.
  void validate() const;
};

json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const json& j);

// Pose of a world waypoint in the functional frame of the object placed at `placement`,
// with the translation taken from the object's functional center.
SE3Pose functional_offset_pose(const SE3Pose& world, const SE3Pose& placement, const AlignmentManifest& manifest);

/// Functional frames of the placed objects and the terminal offset poses of reference demos.
struct JudgeContext {
  std::vector<AlignmentManifest> manifests;
  std::map<std::string, SE3Pose> references;  // keyed by verb

  // Reference = terminal offset pose of `demo` on its own source object.
  void add_reference(const Demonstration& demo);
};

// Success iff the final waypoint's functional offset pose on the primitive's functional
// entity is within the scenario tolerances of the reference for its verb. Throws
// kFrameMissing when the entity has no manifest, placement or reference.
bool judge_subtask(const Trajectory& executed, const Scenario& scenario, const AVOPrimitive& primitive,
                   const JudgeContext& context);

class Executor {
 public:
  virtual ~Executor() = default;
  virtual std::string name() const = 0;
  // World-frame trajectory for `primitive` under `scenario`. Must be thread-safe.
  virtual Trajectory execute(const Scenario& scenario, const AVOPrimitive& primitive, std::uint64_t seed) const = 0;
};

// Replays the first demonstration of the primitive's verb, transferred onto the entity.
class TransferExecutor final : public Executor {
 public:
  TransferExecutor(std::vector<Demonstration> demos, std::vector<AlignmentManifest> manifests,
                   TransferMethod method = TransferMethod::kOffset, double noise = 0.0);
  std::string name() const override { return "transfer"; }
  Trajectory execute(const Scenario& scenario, const AVOPrimitive& primitive, std::uint64_t seed) const override;

 private:
  std::vector<Demonstration> demos_;
  std::vector<AlignmentManifest> manifests_;
  TransferMethod method_;
  double noise_;
};

// Samples an action chunk from a trained checkpoint.
class PolicyExecutor final : public Executor {
 public:
  PolicyExecutor(PolicyCheckpoint checkpoint, std::vector<AlignmentManifest> manifests);
  std::string name() const override { return "policy"; }
  Trajectory execute(const Scenario& scenario, const AVOPrimitive& primitive, std::uint64_t seed) const override;

 private:
  PolicyCheckpoint checkpoint_;
  std::vector<AlignmentManifest> manifests_;
};

// Identity features for the policy state, shared by training and execution.
Eigen::VectorXd instance_feature(const std::string& object_id, int dim);

struct TrialOutcome {
  std::string scenario_id;
  std::uint64_t seed = 0;
  int trial = 0;
  int plan_length = 0;
  std::vector<bool> stages;  // attempted stages in order; stops at the first failure
  std::string error;         // set when the trial could not be executed

  bool success() const;
};

struct Metrics {
  int trials = 0;
  int sub1 = 0;
  int sub2 = 0;
  int full = 0;
  double sr = 0.0;
  double sub1_sr = 0.0;
  std::optional<double> sub2_sr;  // Sub2 / Sub1; null without Sub1 successes
};

Metrics compute_metrics(const std::vector<TrialOutcome>& outcomes);

struct MeanStd {
  std::optional<double> mean;
  std::optional<double> std;  // population
};
MeanStd mean_std(const std::vector<std::optional<double>>& values);

struct EvalOptions {
  int trials = 25;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  double placement_jitter = 0.1;  // meters, per axis in XY
  bool parallel = true;
};

struct EvalReport {
  static constexpr int kSchemaVersion = 1;
  std::string executor;
  EvalOptions options;
  std::vector<TrialOutcome> outcomes;  // sorted by (scenario_id, seed, trial)
  std::map<std::uint64_t, Metrics> per_seed;
  std::map<std::string, Metrics> per_scenario;
  std::map<std::string, Tolerances> tolerances;
  MeanStd sr;
  MeanStd sub1_sr;
  MeanStd sub2_sr;
  std::vector<std::string> errors;

  json to_json() const;
};

// Each trial re-places every object with a random yaw and XY offset, then runs the plan
// stage by stage until one fails. Failures are recorded and never abort the sweep.
EvalReport evaluate(const std::vector<Scenario>& scenarios, const Executor& executor, const JudgeContext& context,
                    const EvalOptions& options = {});

json metrics_to_json(const Metrics& m);

}  // namespace funcanon
