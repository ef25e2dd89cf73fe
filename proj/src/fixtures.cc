#include "funcanon/fixtures.hpp"

#include <cmath>
#include <numbers>

#include "funcanon/error.hpp"
#include "funcanon/random.hpp"

namespace funcanon::fixtures {
namespace {

constexpr double kPi = std::numbers::pi;

Vec3 sphere_sample(Rng& rng) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const double r = std::sqrt(1.0 - z * z);
  return {r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace

FixtureObject make_vessel(const std::string& object_id, const std::string& category, const VesselShape& shape,
                          std::uint64_t seed) {
  Rng rng(derive_seed(seed, "vessel:" + object_id));
  const Vec3 dir(std::cos(shape.spout_azimuth), std::sin(shape.spout_azimuth), 0.0);
  const Vec3 up = Vec3::UnitZ();
  const double r = shape.body_radius;
  const Vec3 body_center(0.0, 0.0, r);
  std::vector<Vec3> pts;
  std::vector<std::string> labels;

  for (int i = 0; i < shape.body_points; ++i) {
    pts.push_back(body_center + r * sphere_sample(rng));
    labels.emplace_back("body");
  }
  // Ring in the plane spanned by -dir and Z, centred beyond the body.
  const Vec3 handle_center = body_center - (r + shape.lobe_gap + 0.2) * dir + Vec3(0, 0, 0.05);
  for (int i = 0; i < shape.handle_points; ++i) {
    const double a = rng.uniform(0.0, 2.0 * kPi);
    const double b = rng.uniform(0.0, 2.0 * kPi);
    const Vec3 radial = std::cos(a) * (-dir) + std::sin(a) * up;
    const Vec3 lateral = dir.cross(up);
    const Vec3 tube = std::cos(b) * radial + std::sin(b) * lateral;
    pts.push_back(handle_center + 0.12 * radial + 0.03 * tube);
    labels.emplace_back("handle");
  }
  // Tube along dir tilted 30 degrees upward.
  const Vec3 axis = (std::cos(kPi / 6) * dir + std::sin(kPi / 6) * up).normalized();
  const Vec3 side = axis.cross(dir.cross(up)).normalized();
  const Vec3 other = axis.cross(side);
  const Vec3 spout_base = body_center + (r + shape.lobe_gap) * dir;
  for (int i = 0; i < shape.spout_points; ++i) {
    const double s = rng.uniform(0.0, shape.spout_length);
    const double b = rng.uniform(0.0, 2.0 * kPi);
    pts.push_back(spout_base + s * axis + 0.04 * (std::cos(b) * side + std::sin(b) * other));
    labels.emplace_back("spout");
  }
  for (auto& p : pts) p *= shape.scale;
  return {object_id, category, PointCloud(std::move(pts)), std::move(labels)};
}

FixtureObject make_kettle(const std::string& object_id, std::uint64_t seed) {
  VesselShape shape;
  shape.spout_azimuth = kPi / 2;
  return make_vessel(object_id, "kettle", shape, seed);
}

FixtureObject make_teapot(const std::string& object_id, std::uint64_t seed) {
  VesselShape shape;
  shape.spout_azimuth = 0.0;
  shape.body_radius = 0.32;
  shape.spout_length = 0.2;
  return make_vessel(object_id, "teapot", shape, seed);
}

FixtureObject make_cup(const std::string& object_id, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "cup:" + object_id));
  std::vector<Vec3> pts;
  for (int i = 0; i < 120; ++i) {
    const double a = rng.uniform(0.0, 2.0 * kPi);
    pts.emplace_back(0.2 * std::cos(a), 0.2 * std::sin(a), rng.uniform(0.0, 0.35));
  }
  for (int i = 0; i < 40; ++i) {
    const double a = rng.uniform(0.0, 2.0 * kPi);
    const double rr = 0.2 * std::sqrt(rng.uniform());
    pts.emplace_back(rr * std::cos(a), rr * std::sin(a), 0.0);
  }
  return {object_id, "cup", PointCloud(pts), std::vector<std::string>(pts.size(), "body")};
}

json fixture_to_json(const FixtureObject& f) {
  json j = cloud_to_json(f.cloud);
  j["object_id"] = f.object_id;
  j["category"] = f.category;
  j["labels"] = f.labels;
  return j;
}

FixtureObject fixture_from_json(const json& j) {
  FixtureObject f;
  f.cloud = cloud_from_json(j);
  try {
    f.object_id = j.at("object_id").get<std::string>();
    f.category = j.at("category").get<std::string>();
    f.labels = j.value("labels", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("fixture: ") + e.what());
  }
  if (!f.labels.empty() && f.labels.size() != f.cloud.size()) {
    throw Error(ErrorCode::kParseError, "fixture label count differs from point count");
  }
  return f;
}

std::vector<OracleEntry> vessel_oracle_table(const std::vector<std::string>& categories) {
  std::vector<OracleEntry> out;
  for (const auto& c : categories) {
    out.push_back({c, "grasp", "active", "handle", true});
    out.push_back({c, "pour", "active", "spout", true});
    out.push_back({c, "water", "active", "spout", true});
    out.push_back({c, "pour", "passive", "handle", false});
    out.push_back({c, "*", "*", "handle", false});
    out.push_back({c, "*", "*", "spout", false});
    out.push_back({c, "*", "*", "body", false});
  }
  return out;
}

std::vector<OracleEntry> receptacle_oracle_table(const std::vector<std::string>& categories) {
  std::vector<OracleEntry> out;
  for (const auto& c : categories) {
    out.push_back({c, "pour", "passive", "body", true});
    out.push_back({c, "place", "passive", "body", true});
    out.push_back({c, "insert", "passive", "body", true});
    out.push_back({c, "grasp", "active", "body", true});
    out.push_back({c, "*", "*", "body", false});
  }
  return out;
}

const std::vector<CatalogEntry>& instance_catalog() {
  static const std::vector<CatalogEntry> kCatalog{
      {"Mug", 27, "actor/object"},   {"Pitcher", 30, "actor/object"}, {"Teacup", 11, "actor/object"},
      {"Teapot", 72, "actor/object"}, {"Box", 10, "object"},          {"Apple", 20, "object"},
      {"Can", 20, "object"},          {"Cookie", 21, "object"},       {"Cabinet", 5, "object"},
  };
  return kCatalog;
}

Vec3 label_centroid(const FixtureObject& f, const std::string& label) {
  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (std::size_t i = 0; i < f.labels.size(); ++i) {
    if (f.labels[i] == label) {
      sum += f.cloud.points()[i];
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, f.object_id + " has no points labelled " + label);
  return sum / n;
}

namespace {

FixtureObject normalized_fixture(const FixtureObject& f) {
  FixtureObject out = f;
  out.cloud = normalize_model(f.cloud).first;
  return out;
}

Mat3 heading_rotation(const Vec3& toward) {
  const double yaw = std::atan2(toward.y(), toward.x());
  return rot_z(yaw).rotation();
}

}  // namespace

Demonstration make_grasp_demo(const std::string& demo_id, const FixtureObject& object, const SE3Pose& object_pose,
                              std::uint64_t seed, const DemoOptions& options) {
  const FixtureObject model = normalized_fixture(object);
  const Vec3 handle = label_centroid(model, "handle");
  const Vec3 outward = Vec3(handle.x(), handle.y(), 0.0).normalized();
  Rng rng(derive_seed(seed, "grasp-demo:" + demo_id));
  // Gripper Z points down, X toward the handle from outside.
  const Mat3 down = Eigen::AngleAxisd(kPi, Vec3::UnitX()).toRotationMatrix();
  const Mat3 r = heading_rotation(-outward) * down;
  const Vec3 grasp_point = handle + Vec3(rng.uniform(-0.005, 0.005), rng.uniform(-0.005, 0.005), 0.01);
  std::vector<SE3Pose> wps;
  std::vector<double> grip;
  const int n = options.waypoints;
  for (int k = 0; k < n; ++k) {
    const double s = n == 1 ? 1.0 : static_cast<double>(k) / (n - 1);
    Vec3 p = grasp_point + (1.0 - s) * (options.approach_height * Vec3::UnitZ() + 0.2 * outward);
    if (k + 1 < n) p += 0.003 * rng.normal_vector(3);
    wps.push_back(compose(object_pose, SE3Pose(r, p)));
    grip.push_back(k >= n - 2 ? 0.0 : 1.0);
  }
  Trajectory traj(std::move(wps), std::move(grip), FrameTag::world());
  const SE3Pose start = traj.waypoints().front();
  return {demo_id, {1, "grasp", kGripperActor, object.object_id}, start, object_pose, std::move(traj),
          object.object_id};
}

Demonstration make_pour_demo(const std::string& demo_id, const FixtureObject& vessel, const std::string& receiver,
                             const SE3Pose& vessel_pose, const SE3Pose& receiver_pose, std::uint64_t seed,
                             const DemoOptions& options) {
  const FixtureObject model = normalized_fixture(vessel);
  const Vec3 spout = label_centroid(model, "spout");
  const Vec3 outward = Vec3(spout.x(), spout.y(), 0.0).normalized();
  const Vec3 lateral = Vec3::UnitZ().cross(outward);
  Rng rng(derive_seed(seed, "pour-demo:" + demo_id));
  const double tilt = options.pour_tilt + rng.uniform(-0.05, 0.05);
  std::vector<SE3Pose> wps;
  std::vector<double> grip;
  const int n = options.waypoints;
  for (int k = 0; k < n; ++k) {
    const double s = n == 1 ? 1.0 : static_cast<double>(k) / (n - 1);
    const Mat3 r = Eigen::AngleAxisd(s * tilt, lateral).toRotationMatrix();
    Vec3 p = spout + s * (0.1 * outward - 0.05 * Vec3::UnitZ());
    if (k + 1 < n && k > 0) p += 0.002 * rng.normal_vector(3);
    wps.push_back(compose(vessel_pose, SE3Pose(r, p)));
    grip.push_back(0.0);
  }
  return {demo_id,    {2, "pour", vessel.object_id, receiver}, vessel_pose, receiver_pose,
          Trajectory(std::move(wps), std::move(grip), FrameTag::world()), vessel.object_id};
}

}  // namespace funcanon::fixtures
