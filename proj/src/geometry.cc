#include "funcanon/geometry.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/SVD>

#include "funcanon/error.hpp"

namespace funcanon {

double orthonormality_drift(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

namespace {

Mat3 repair_if_drifted(const Mat3& r) {
  return orthonormality_drift(r) > kOrthonormalDrift ? nearest_rotation(r) : r;
}

}  // namespace

SE3Pose::SE3Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "pose has non-finite entries");
  }
  if (orthonormality_drift(rotation) > kRotationAcceptance || rotation.determinant() <= 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "rotation is not in SO(3)");
  }
  rotation_ = repair_if_drifted(rotation);
}

SE3Pose SE3Pose::from_matrix(const Mat4& m) {
  return SE3Pose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

SE3Pose SE3Pose::from_flat(std::span<const double, 12> values) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = values[3 * i + j];
  return SE3Pose(r, Vec3(values[9], values[10], values[11]));
}

Mat4 SE3Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

std::array<double, 12> SE3Pose::flat() const {
  std::array<double, 12> out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[3 * i + j] = rotation_(i, j);
  for (int i = 0; i < 3; ++i) out[9 + i] = translation_[i];
  return out;
}

SE3Pose SE3Pose::with_translation(const Vec3& t) const {
  if (!t.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite translation");
  return SE3Pose(Unchecked{}, rotation_, t);
}

SE3Pose compose(const SE3Pose& a, const SE3Pose& b) {
  return SE3Pose(SE3Pose::Unchecked{}, repair_if_drifted(a.rotation_ * b.rotation_),
                 a.rotation_ * b.translation_ + a.translation_);
}

SE3Pose invert(const SE3Pose& p) {
  Mat3 rt = p.rotation_.transpose();
  return SE3Pose(SE3Pose::Unchecked{}, rt, -(rt * p.translation_));
}

SE3Pose rot_z(double theta) {
  if (!std::isfinite(theta)) throw Error(ErrorCode::kInvalidArgument, "non-finite angle");
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Mat3 r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return SE3Pose(r, Vec3::Zero());
}

double rotation_distance(const Mat3& a, const Mat3& b) {
  return log_rotation(a.transpose() * b).norm();
}

Vec3 log_rotation(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  double angle = aa.angle();
  Vec3 axis = aa.axis();
  if (angle > std::numbers::pi) {
    angle = 2.0 * std::numbers::pi - angle;
    axis = -axis;
  }
  return axis * angle;
}

Mat3 exp_rotation(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-15) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

double wrap_angle(double theta) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  w -= std::numbers::pi;
  // fmod rounding can land exactly on +pi.
  if (w >= std::numbers::pi) w -= kTwoPi;
  return w;
}

PointCloud::PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
  for (const auto& p : points_) {
    if (!p.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite point coordinate");
  }
}

PointCloud::PointCloud(std::vector<Vec3> points, std::vector<VecX> features)
    : PointCloud(std::move(points)) {
  if (features.size() != points_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "feature count differs from point count");
  }
  features_ = std::move(features);
}

const std::vector<VecX>& PointCloud::features() const {
  if (!features_) throw Error(ErrorCode::kInvalidArgument, "cloud has no features");
  return *features_;
}

Vec3 PointCloud::centroid() const {
  if (points_.empty()) throw Error(ErrorCode::kInvalidArgument, "centroid of empty cloud");
  Vec3 sum = Vec3::Zero();
  for (const auto& p : points_) sum += p;
  return sum / static_cast<double>(points_.size());
}

PointCloud PointCloud::with_features(std::vector<VecX> features) const {
  return PointCloud(points_, std::move(features));
}

PointCloud PointCloud::subset(std::span<const std::size_t> indices) const {
  std::vector<Vec3> pts;
  std::vector<VecX> feats;
  pts.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= points_.size()) throw Error(ErrorCode::kInvalidArgument, "point index out of range");
    pts.push_back(points_[i]);
    if (features_) feats.push_back((*features_)[i]);
  }
  if (features_) return PointCloud(std::move(pts), std::move(feats));
  return PointCloud(std::move(pts));
}

PointCloud apply_pose(const SE3Pose& p, const PointCloud& cloud) {
  std::vector<Vec3> pts;
  pts.reserve(cloud.size());
  for (const auto& x : cloud.points()) pts.push_back(p.apply(x));
  if (cloud.has_features()) return PointCloud(std::move(pts), cloud.features());
  return PointCloud(std::move(pts));
}

std::string FrameTag::to_string() const {
  return kind == Kind::kWorld ? std::string("world") : "functional(" + object_id + ")";
}

Trajectory::Trajectory(std::vector<SE3Pose> waypoints, std::vector<double> gripper, FrameTag frame)
    : waypoints_(std::move(waypoints)), gripper_(std::move(gripper)), frame_(std::move(frame)) {
  if (waypoints_.empty()) throw Error(ErrorCode::kInvalidArgument, "trajectory has no waypoints");
  if (waypoints_.size() != gripper_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "gripper state count differs from waypoint count");
  }
  for (double g : gripper_) {
    if (!(g >= 0.0 && g <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "gripper state outside [0,1]");
  }
  if (frame_.kind == FrameTag::Kind::kFunctional && frame_.object_id.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "functional frame tag without object id");
  }
}

Trajectory Trajectory::retagged(FrameTag frame) const {
  return Trajectory(waypoints_, gripper_, std::move(frame));
}

Trajectory Trajectory::transformed(const SE3Pose& p, FrameTag frame) const {
  std::vector<SE3Pose> out;
  out.reserve(waypoints_.size());
  for (const auto& w : waypoints_) out.push_back(compose(p, w));
  return Trajectory(std::move(out), gripper_, std::move(frame));
}

Trajectory Trajectory::concat(const Trajectory& tail) const {
  if (!(frame_ == tail.frame_)) {
    throw Error(ErrorCode::kFrameMismatch,
                "cannot join " + frame_.to_string() + " with " + tail.frame_.to_string());
  }
  auto w = waypoints_;
  auto g = gripper_;
  w.insert(w.end(), tail.waypoints_.begin(), tail.waypoints_.end());
  g.insert(g.end(), tail.gripper_.begin(), tail.gripper_.end());
  return Trajectory(std::move(w), std::move(g), frame_);
}

std::vector<SE3Pose> Trajectory::relative_transforms() const {
  std::vector<SE3Pose> out;
  for (std::size_t i = 0; i + 1 < waypoints_.size(); ++i) {
    out.push_back(compose(invert(waypoints_[i]), waypoints_[i + 1]));
  }
  return out;
}

}  // namespace funcanon
