#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "funcanon/recognition.hpp"
#include "funcanon/transfer.hpp"

namespace funcanon::fixtures {

// Synthetic object with per-point generation labels ("body", "handle", "spout").
struct FixtureObject {
  std::string object_id;
  std::string category;
  PointCloud cloud;
  std::vector<std::string> labels;
};

struct VesselShape {
  double spout_azimuth = std::numbers::pi / 2;  // spout direction in the XY plane
  double scale = 1.0;
  double body_radius = 0.3;
  double spout_length = 0.25;
  double lobe_gap = 0.5;  // body surface to spout base; the handle ring centre is 0.2 further out
  int body_points = 160;
  int handle_points = 60;
  int spout_points = 60;
};

// Spherical body, handle ring opposite the spout, spout tube tilted upward.
FixtureObject make_vessel(const std::string& object_id, const std::string& category, const VesselShape& shape,
                          std::uint64_t seed);
// Spout toward +Y.
FixtureObject make_kettle(const std::string& object_id = "kettle", std::uint64_t seed = 1);
// Spout toward +X.
FixtureObject make_teapot(const std::string& object_id = "teapot", std::uint64_t seed = 2);
// Open cylinder labelled "body".
FixtureObject make_cup(const std::string& object_id = "cup", std::uint64_t seed = 3);

json fixture_to_json(const FixtureObject& f);
FixtureObject fixture_from_json(const json& j);

// handle:(grasp, active)=True, spout:(pour, active)=True, everything else False.
std::vector<OracleEntry> vessel_oracle_table(const std::vector<std::string>& categories);
// body:(pour, passive)=True and (place, passive)=True for receptacles.
std::vector<OracleEntry> receptacle_oracle_table(const std::vector<std::string>& categories);

struct CatalogEntry {
  std::string category;
  int count = 0;
  std::string roles;  // "actor/object" or "object"
};
const std::vector<CatalogEntry>& instance_catalog();

// Mean of the points carrying `label`, in the cloud's own coordinates.
Vec3 label_centroid(const FixtureObject& f, const std::string& label);

struct DemoOptions {
  int waypoints = 12;
  double approach_height = 0.3;
  double pour_tilt = 1.2;  // radians about the spout's lateral axis
};

// Demonstrations are generated against the normalized model of `object`; `object_pose`
// places that model in the world.
Demonstration make_grasp_demo(const std::string& demo_id, const FixtureObject& object, const SE3Pose& object_pose,
                              std::uint64_t seed, const DemoOptions& options = {});
Demonstration make_pour_demo(const std::string& demo_id, const FixtureObject& vessel, const std::string& receiver,
                             const SE3Pose& vessel_pose, const SE3Pose& receiver_pose, std::uint64_t seed, const DemoOptions& options = {});

}  // namespace funcanon::fixtures
