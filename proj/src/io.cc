#include "funcanon/io.hpp"

#include <fstream>
#include <sstream>

#include "funcanon/error.hpp"

namespace funcanon {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << content;
}

json read_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::vector<json> read_json_lines(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
    }
  }
  return out;
}

double unit_scale(std::string_view units) {
  if (units == "m") return 1.0;
  if (units == "cm") return 0.01;
  if (units == "mm") return 0.001;
  throw Error(ErrorCode::kParseError, "unknown units '" + std::string(units) + "'");
}

json vec_to_json(const VecX& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

VecX vec_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kParseError, "expected numeric array");
  VecX v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::kParseError, "expected 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json pose_to_json(const SE3Pose& p) {
  const auto f = p.flat();
  json j;
  j["rotation"] = std::vector<double>(f.begin(), f.begin() + 9);
  j["translation"] = std::vector<double>(f.begin() + 9, f.end());
  return j;
}

SE3Pose pose_from_json(const json& j, double scale) {
  try {
    const auto& r = j.at("rotation");
    const auto& t = j.at("translation");
    if (r.size() != 9 || t.size() != 3) throw Error(ErrorCode::kParseError, "pose needs 9+3 floats");
    std::array<double, 12> flat{};
    for (int i = 0; i < 9; ++i) flat[i] = r[i].get<double>();
    for (int i = 0; i < 3; ++i) flat[9 + i] = t[i].get<double>() * scale;
    return SE3Pose::from_flat(flat);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("pose: ") + e.what());
  }
}

json waypoints_to_json(const Trajectory& t) {
  json arr = json::array();
  for (std::size_t i = 0; i < t.size(); ++i) {
    json w = pose_to_json(t.waypoints()[i]);
    w["gripper"] = t.gripper()[i];
    arr.push_back(std::move(w));
  }
  return arr;
}

Trajectory trajectory_from_json(const json& waypoints, FrameTag frame, double scale) {
  if (!waypoints.is_array()) throw Error(ErrorCode::kParseError, "waypoints must be an array");
  std::vector<SE3Pose> poses;
  std::vector<double> gripper;
  for (const auto& w : waypoints) {
    poses.push_back(pose_from_json(w, scale));
    try {
      gripper.push_back(w.at("gripper").get<double>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, std::string("waypoint gripper: ") + e.what());
    }
  }
  return Trajectory(std::move(poses), std::move(gripper), std::move(frame));
}

json cloud_to_json(const PointCloud& cloud) {
  json j;
  j["units"] = "m";
  json pts = json::array();
  for (const auto& p : cloud.points()) pts.push_back(vec3_to_json(p));
  j["points"] = std::move(pts);
  if (cloud.has_features()) {
    json f = json::array();
    for (const auto& v : cloud.features()) f.push_back(vec_to_json(v));
    j["features"] = std::move(f);
  }
  return j;
}

PointCloud cloud_from_json(const json& j) {
  try {
    const double scale = unit_scale(j.value("units", std::string("m")));
    std::vector<Vec3> pts;
    for (const auto& p : j.at("points")) pts.push_back(vec3_from_json(p) * scale);
    if (j.contains("features")) {
      std::vector<VecX> feats;
      for (const auto& f : j.at("features")) feats.push_back(vec_from_json(f));
      return PointCloud(std::move(pts), std::move(feats));
    }
    return PointCloud(std::move(pts));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("point cloud: ") + e.what());
  }
}

PointCloud parse_ply(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
    throw Error(ErrorCode::kParseError, "missing ply magic");
  }
  std::size_t vertex_count = 0;
  std::vector<std::string> props;
  bool in_vertex = false;
  bool ascii = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> vertex_count;
    } else if (word == "property" && in_vertex) {
      std::string type;
      std::string name;
      ls >> type >> name;
      if (type == "list") throw Error(ErrorCode::kParseError, "list vertex properties unsupported");
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw Error(ErrorCode::kParseError, "only ascii ply is supported");
  if (props.size() < 3 || props[0] != "x" || props[1] != "y" || props[2] != "z") {
    throw Error(ErrorCode::kParseError, "ply vertex must start with x y z");
  }
  const std::size_t feature_dim = props.size() - 3;
  std::vector<Vec3> pts;
  std::vector<VecX> feats;
  for (std::size_t i = 0; i < vertex_count; ++i) {
    if (!std::getline(in, line)) throw Error(ErrorCode::kParseError, "ply truncated");
    std::istringstream ls(line);
    Vec3 p;
    VecX f(static_cast<Eigen::Index>(feature_dim));
    if (!(ls >> p.x() >> p.y() >> p.z())) throw Error(ErrorCode::kParseError, "bad ply vertex row");
    for (std::size_t k = 0; k < feature_dim; ++k) {
      if (!(ls >> f[static_cast<Eigen::Index>(k)])) throw Error(ErrorCode::kParseError, "bad ply feature");
    }
    pts.push_back(p);
    if (feature_dim > 0) feats.push_back(std::move(f));
  }
  if (feature_dim > 0) return PointCloud(std::move(pts), std::move(feats));
  return PointCloud(std::move(pts));
}

std::string format_ply(const PointCloud& cloud) {
  std::ostringstream out;
  out.precision(17);
  const std::size_t dim = cloud.has_features() && !cloud.empty() ? cloud.features()[0].size() : 0;
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  for (std::size_t k = 0; k < dim; ++k) out << "property double f" << k << "\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points()[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z();
    for (std::size_t k = 0; k < dim; ++k) out << ' ' << cloud.features()[i][static_cast<Eigen::Index>(k)];
    out << '\n';
  }
  return out.str();
}

PointCloud load_cloud(const std::filesystem::path& path) {
  if (path.extension() == ".ply") return parse_ply(read_text_file(path));
  return cloud_from_json(read_json_file(path));
}

}  // namespace funcanon
