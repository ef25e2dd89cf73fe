#include "funcanon/transfer.hpp"

#include <algorithm>

#include "funcanon/error.hpp"

namespace funcanon {

Demonstration demonstration_from_json(const json& j) {
  try {
    const double scale = unit_scale(j.value("units", std::string("m")));
    const auto& p = j.at("primitive");
    AVOPrimitive prim{p.value("step", 1), p.at("verb").get<std::string>(), p.at("actor").get<std::string>(),
                      p.at("object").get<std::string>()};
    std::string source = j.value("source_object_id", functional_entity(prim));
    return Demonstration{j.at("demo_id").get<std::string>(),
                         prim,
                         pose_from_json(j.at("actor_pose"), scale),
                         pose_from_json(j.at("object_pose"), scale),
                         trajectory_from_json(j.at("waypoints"), FrameTag::world(), scale),
                         std::move(source)};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("demonstration: ") + e.what());
  }
}

json demonstration_to_json(const Demonstration& d) {
  return {{"demo_id", d.demo_id},
          {"primitive", {{"step", d.primitive.step}, {"actor", d.primitive.actor},
                         {"verb", d.primitive.verb}, {"object", d.primitive.object}}},
          {"actor_pose", pose_to_json(d.actor_pose)},
          {"object_pose", pose_to_json(d.object_pose)},
          {"source_object_id", d.source_object_id},
          {"waypoints", waypoints_to_json(d.trajectory)},
          {"units", "m"}};
}

std::vector<Demonstration> load_demonstrations(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::kIoError, dir.string() + " is not a directory");
  std::vector<Demonstration> demos;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") demos.push_back(demonstration_from_json(read_json_file(entry.path())));
  }
  std::sort(demos.begin(), demos.end(), [](const auto& a, const auto& b) { return a.demo_id < b.demo_id; });
  return demos;
}

const SE3Pose& entity_pose(const Demonstration& demo) {
  return demo.primitive.verb == "grasp" ? demo.object_pose : demo.actor_pose;
}

SE3Pose functional_frame_in_world(const SE3Pose& object_pose, const FunctionalFrame& frame) {
  return compose(object_pose, invert(frame.pose));
}

Trajectory to_functional_frame(const Trajectory& world, const FunctionalFrame& frame, const SE3Pose& object_pose) {
  if (!world.frame().is_world()) {
    throw Error(ErrorCode::kFrameMismatch, "expected a world trajectory, got " + world.frame().to_string());
  }
  return world.transformed(invert(functional_frame_in_world(object_pose, frame)),
                           FrameTag::functional(frame.object_id));
}

Trajectory to_functional_frame(const Demonstration& demo, const FunctionalFrame& frame, const SE3Pose& object_pose) {
  if (frame.object_id != demo.source_object_id) {
    throw Error(ErrorCode::kFrameMismatch,
                "frame of " + frame.object_id + " applied to demo on " + demo.source_object_id);
  }
  return to_functional_frame(demo.trajectory, frame, object_pose);
}

Trajectory to_world_frame(const Trajectory& functional, const FunctionalFrame& frame, const SE3Pose& object_pose) {
  if (!(functional.frame() == FrameTag::functional(frame.object_id))) {
    throw Error(ErrorCode::kFrameMismatch,
                "trajectory in " + functional.frame().to_string() + " mapped with frame of " + frame.object_id);
  }
  return functional.transformed(functional_frame_in_world(object_pose, frame), FrameTag::world());
}

std::string method_name(TransferMethod m) { return m == TransferMethod::kOffset ? "offset" : "frame"; }

TransferMethod parse_method(const std::string& text) {
  if (text == "offset") return TransferMethod::kOffset;
  if (text == "frame") return TransferMethod::kFrame;
  throw Error(ErrorCode::kInvalidArgument, "transfer method must be offset or frame, got '" + text + "'");
}

Trajectory transfer_trajectory(const Trajectory& source, const FunctionalVector& v_s, const FunctionalVector& v_t,
                               TransferMethod method) {
  if (v_s.verb != v_t.verb || v_s.role != v_t.role) {
    throw Error(ErrorCode::kIncompatibleFunction, "(" + v_s.verb + ", " + role_name(v_s.role) + ") vs (" +
                                                      v_t.verb + ", " + role_name(v_t.role) + ")");
  }
  if (!(source.frame() == FrameTag::functional(v_s.object_id))) {
    throw Error(ErrorCode::kFrameMismatch,
                "source trajectory in " + source.frame().to_string() + ", expected functional(" + v_s.object_id + ")");
  }
  FrameTag target = FrameTag::functional(v_t.object_id);
  if (method == TransferMethod::kOffset) {
    const Vec3 offset = v_t.v - v_s.v;
    std::vector<SE3Pose> out;
    out.reserve(source.size());
    for (const auto& w : source.waypoints()) out.push_back(w.with_translation(w.translation() + offset));
    return Trajectory(std::move(out), source.gripper(), std::move(target));
  }
  const double theta = align_z_rotation(v_s, v_t).frame.z_angle;
  const SE3Pose change =
      compose(SE3Pose::from_translation(v_t.v), compose(rot_z(theta), SE3Pose::from_translation(-v_s.v)));
  return source.transformed(change, std::move(target));
}

TransferRecord transfer_demo(const Demonstration& demo, const AlignmentManifest& source,
                             const AlignmentManifest& target, TransferMethod method) {
  const FunctionalVector v_s = source.canonical_vector();
  const FunctionalVector v_t = target.canonical_vector();
  Trajectory functional = to_functional_frame(demo, source.frame(), entity_pose(demo));
  Trajectory moved = transfer_trajectory(functional, v_s, v_t, method);
  return TransferRecord{demo.demo_id, target.object_id, v_s, v_t, std::move(functional), std::move(moved), method};
}

namespace {

json vector_to_json(const FunctionalVector& v) {
  return {{"object_id", v.object_id}, {"verb", v.verb}, {"role", role_name(v.role)}, {"v", vec3_to_json(v.v)}};
}

FunctionalVector vector_from_json(const json& j) {
  return {j.at("object_id").get<std::string>(), j.at("verb").get<std::string>(),
          parse_role(j.at("role").get<std::string>()), vec3_from_json(j.at("v"))};
}

}  // namespace

json transfer_record_to_json(const TransferRecord& r) {
  return {{"demo_id", r.demo_id},
          {"target_object_id", r.target_object_id},
          {"method", method_name(r.method)},
          {"v_s", vector_to_json(r.v_s)},
          {"v_t", vector_to_json(r.v_t)},
          {"source", waypoints_to_json(r.source)},
          {"transferred", waypoints_to_json(r.transferred)}};
}

TransferRecord transfer_record_from_json(const json& j) {
  try {
    FunctionalVector v_s = vector_from_json(j.at("v_s"));
    FunctionalVector v_t = vector_from_json(j.at("v_t"));
    Trajectory source = trajectory_from_json(j.at("source"), FrameTag::functional(v_s.object_id));
    Trajectory moved = trajectory_from_json(j.at("transferred"), FrameTag::functional(v_t.object_id));
    return TransferRecord{j.at("demo_id").get<std::string>(), j.at("target_object_id").get<std::string>(),
                          v_s, v_t, std::move(source), std::move(moved),
                          parse_method(j.at("method").get<std::string>())};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("transfer record: ") + e.what());
  }
}

const AlignmentManifest* find_manifest(const std::vector<AlignmentManifest>& manifests, const std::string& object_id,
                                       const std::string& verb, Role role) {
  for (const auto& m : manifests) {
    if (m.object_id == object_id && m.verb == verb && m.role == role) return &m;
  }
  return nullptr;
}

AugmentResult augment_category(const std::vector<Demonstration>& demos, const std::vector<std::string>& targets,
                               const std::vector<AlignmentManifest>& manifests, TransferMethod method) {
  if (targets.empty()) throw Error(ErrorCode::kNoTargets, "augment_category needs at least one target");
  std::vector<const Demonstration*> order;
  for (const auto& d : demos) order.push_back(&d);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->demo_id < b->demo_id; });
  std::vector<std::string> sorted_targets = targets;
  std::sort(sorted_targets.begin(), sorted_targets.end());

  struct PairOutcome {
    std::optional<TransferRecord> record;
    TransferFailure failure;
  };
  auto run_pair = [&manifests, method](const Demonstration* d, const std::string& target) -> PairOutcome {
        const std::string& verb = d->primitive.verb;
        const auto* src = find_manifest(manifests, d->source_object_id, verb, Role::kActive);
        const auto* dst = find_manifest(manifests, target, verb, Role::kActive);
        if (src == nullptr || dst == nullptr) {
          const std::string& missing = src == nullptr ? d->source_object_id : target;
          return {std::nullopt, {d->demo_id, target, "no functional vector for " + missing + " under (" + verb +
                                                         ", active)"}};
        }
        try {
          return {transfer_demo(*d, *src, *dst, method), {}};
        } catch (const Error& e) {
          return {std::nullopt, {d->demo_id, target, e.what()}};
        }
  };
  AugmentResult out;
  for (const Demonstration* d : order) {
    for (const auto& target : sorted_targets) {
      PairOutcome o = run_pair(d, target);
      if (o.record) out.records.push_back(std::move(*o.record));
      else out.failures.push_back(std::move(o.failure));
    }
  }
  return out;
}

}  // namespace funcanon
