#pragma once

#include <string>
#include <vector>

#include "funcanon/alignment.hpp"
#include "funcanon/primitive.hpp"

namespace funcanon {

struct Demonstration {
  std::string demo_id;
  AVOPrimitive primitive;
  SE3Pose actor_pose;   // world, at segment start
  SE3Pose object_pose;  // world, at segment start
  Trajectory trajectory;
  std::string source_object_id;
};

// Parses the demonstration file format and converts declared units to meters.
Demonstration demonstration_from_json(const json& j);
json demonstration_to_json(const Demonstration& d);
// Every *.json file in `dir`, sorted by demo_id.
std::vector<Demonstration> load_demonstrations(const std::filesystem::path& dir);

// World pose of the source object's normalized model: the object's pose for grasp,
// the actor's otherwise.
const SE3Pose& entity_pose(const Demonstration& demo);

// World pose of an object's functional frame: object_pose * inv(frame.pose).
SE3Pose functional_frame_in_world(const SE3Pose& object_pose, const FunctionalFrame& frame);

// World waypoints -> functional(frame.object_id). Throws kFrameMismatch if the frame
// belongs to another object or the trajectory is not world-tagged.
Trajectory to_functional_frame(const Demonstration& demo, const FunctionalFrame& frame, const SE3Pose& object_pose);
Trajectory to_functional_frame(const Trajectory& world, const FunctionalFrame& frame, const SE3Pose& object_pose);
Trajectory to_world_frame(const Trajectory& functional, const FunctionalFrame& frame, const SE3Pose& object_pose);

enum class TransferMethod {
  kOffset,  // tau_t = tau_s + (v_t - v_s) on translations
  kFrame    // rigid re-heading about the functional centers: T(v_t) Rz(theta) T(-v_s)
};

std::string method_name(TransferMethod m);
TransferMethod parse_method(const std::string& text);

// `source` is tagged functional(v_s.object_id); the result is tagged functional(v_t.object_id).
// Throws kIncompatibleFunction on (verb, role) mismatch.
Trajectory transfer_trajectory(const Trajectory& source, const FunctionalVector& v_s, const FunctionalVector& v_t,
                               TransferMethod method);

struct TransferRecord {
  std::string demo_id;
  std::string target_object_id;
  FunctionalVector v_s;
  FunctionalVector v_t;
  Trajectory source;       // demo in the source functional frame
  Trajectory transferred;  // in the target functional frame
  TransferMethod method = TransferMethod::kOffset;
};

// Uses the manifests' canonical vectors so both objects share one heading.
TransferRecord transfer_demo(const Demonstration& demo, const AlignmentManifest& source,
                             const AlignmentManifest& target, TransferMethod method);

json transfer_record_to_json(const TransferRecord& r);
TransferRecord transfer_record_from_json(const json& j);

struct TransferFailure {
  std::string demo_id;
  std::string target_object_id;
  std::string message;
};

struct AugmentResult {
  std::vector<TransferRecord> records;  // ordered by (demo_id, target_id)
  std::vector<TransferFailure> failures;
};

// Every demo onto every target, the source itself included. Missing vectors are reported
// per pair. Throws kNoTargets when `targets` is empty.
AugmentResult augment_category(const std::vector<Demonstration>& demos, const std::vector<std::string>& targets,
                               const std::vector<AlignmentManifest>& manifests,
                               TransferMethod method = TransferMethod::kOffset);

const AlignmentManifest* find_manifest(const std::vector<AlignmentManifest>& manifests, const std::string& object_id,
                                       const std::string& verb, Role role);

}  // namespace funcanon
