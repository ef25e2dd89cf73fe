#include "funcanon/alignment.hpp"

#include <cmath>
#include <set>

#include <Eigen/SVD>

#include "funcanon/error.hpp"

namespace funcanon {

FunctionalVector functional_vector(const FunctionalSet& fs, const PointCloud& cloud, VectorNormalization mode) {
  if (fs.regions.empty()) {
    throw Error(ErrorCode::kEmptyFunctionalSet,
                "functional set of " + fs.object_id + " for (" + fs.verb + ", " + role_name(fs.role) + ") is empty");
  }
  Vec3 sum = Vec3::Zero();
  std::size_t count = 0;
  if (mode == VectorNormalization::kPointMean) {
    std::set<std::size_t> members;
    for (const auto& r : fs.regions) members.insert(r.point_indices.begin(), r.point_indices.end());
    for (std::size_t i : members) sum += cloud.points().at(i);
    count = members.size();
  } else {
    for (const auto& r : fs.regions)
      for (std::size_t i : r.point_indices) sum += cloud.points().at(i);
    count = fs.regions.size();
  }
  if (count == 0) throw Error(ErrorCode::kEmptyFunctionalSet, "functional regions contain no points");
  return {fs.object_id, fs.verb, fs.role, sum / static_cast<double>(count)};
}

FunctionalFrame make_frame(std::string object_id, double z_angle) {
  const double wrapped = wrap_angle(z_angle);
  return {std::move(object_id), wrapped, rot_z(wrapped)};
}

double z_objective(double theta, const Vec3& v_s, const Vec3& v_t) {
  return (rot_z(theta).rotation() * v_s - v_t).squaredNorm();
}

ZAlignment align_z_rotation(const FunctionalVector& v_s, const FunctionalVector& v_t) {
  const double ns = v_s.v.head<2>().norm();
  const double nt = v_t.v.head<2>().norm();
  if (ns < kDegenerateXY || nt < kDegenerateXY) {
    throw Error(ErrorCode::kDegenerateDirection,
                "functional center on the Z axis leaves the heading unconstrained (" +
                    (ns < kDegenerateXY ? v_s.object_id : v_t.object_id) + ")");
  }
  const double theta = wrap_angle(std::atan2(v_t.v.y(), v_t.v.x()) - std::atan2(v_s.v.y(), v_s.v.x()));
  ZAlignment out{make_frame(v_s.object_id, theta), 0.0};
  out.residual = z_objective(out.frame.z_angle, v_s.v, v_t.v);
  return out;
}

Mat3 align_so3(const Vec3& v_s, const Vec3& v_t) {
  const Mat3 h = v_s * v_t.transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixV() * d * svd.matrixU().transpose();
}

std::pair<PointCloud, ModelNormalization> normalize_model(const PointCloud& cloud) {
  ModelNormalization n;
  n.center = cloud.centroid();
  Vec3 lo = cloud.points()[0];
  Vec3 hi = lo;
  for (const auto& p : cloud.points()) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double diag = (hi - lo).norm();
  n.scale = diag > 0.0 ? 1.0 / diag : 1.0;
  std::vector<Vec3> pts;
  pts.reserve(cloud.size());
  for (const auto& p : cloud.points()) pts.push_back((p - n.center) * n.scale);
  if (cloud.has_features()) return {PointCloud(std::move(pts), cloud.features()), n};
  return {PointCloud(std::move(pts)), n};
}

json normalization_to_json(const ModelNormalization& n) {
  return {{"convention", "centroid-origin, unit bounding-box diagonal"},
          {"center", vec3_to_json(n.center)},
          {"scale", n.scale}};
}

void AnchorRegistry::register_vector(const std::string& category, const FunctionalVector& fv) {
  anchors_.try_emplace({category, fv.verb, fv.role}, fv);
}

void AnchorRegistry::set_anchor(const std::string& category, const FunctionalVector& fv) {
  anchors_.insert_or_assign({category, fv.verb, fv.role}, fv);
}

std::optional<FunctionalVector> AnchorRegistry::anchor(const std::string& category, const std::string& verb,
                                                       Role role) const {
  auto it = anchors_.find({category, verb, role});
  if (it == anchors_.end()) return std::nullopt;
  return it->second;
}

FunctionalVector AlignmentManifest::canonical_vector() const {
  return {object_id, verb, role, rot_z(z_angle).rotation() * v};
}

json manifest_to_json(const AlignmentManifest& m) {
  return {{"object_id", m.object_id}, {"category", m.category}, {"verb", m.verb},
          {"role", role_name(m.role)}, {"v", vec3_to_json(m.v)},   {"z_angle", m.z_angle},
          {"anchor_id", m.anchor_id},  {"residual", m.residual}};
}

AlignmentManifest manifest_from_json(const json& j) {
  try {
    AlignmentManifest m;
    m.object_id = j.at("object_id").get<std::string>();
    m.category = j.at("category").get<std::string>();
    m.verb = j.at("verb").get<std::string>();
    m.role = parse_role(j.at("role").get<std::string>());
    m.v = vec3_from_json(j.at("v"));
    m.z_angle = j.at("z_angle").get<double>();
    m.anchor_id = j.at("anchor_id").get<std::string>();
    m.residual = j.at("residual").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("alignment manifest: ") + e.what());
  }
}

Canonicalization canonicalize(const std::string& object_id, const std::string& category, const PointCloud& cloud,
                              const FunctionalSet& fs, const AnchorRegistry& registry, VectorNormalization mode) {
  const auto anchor = registry.anchor(category, fs.verb, fs.role);
  if (!anchor) {
    throw Error(ErrorCode::kNoAnchor,
                "no anchor registered for (" + category + ", " + fs.verb + ", " + role_name(fs.role) + ")");
  }
  const FunctionalVector v = functional_vector(fs, cloud, mode);
  const ZAlignment za = align_z_rotation(v, *anchor);
  AlignmentManifest m{object_id, category, fs.verb, fs.role, v.v, za.frame.z_angle, anchor->object_id, za.residual};
  return {apply_pose(za.frame.pose, cloud), m};
}

}  // namespace funcanon
