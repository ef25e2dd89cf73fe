#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace funcanon {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;

// Rotation drift (max |R^T R - I|) above which a rotation is re-projected onto SO(3).
inline constexpr double kOrthonormalDrift = 1e-12;
// Inputs further than this from SO(3) are rejected rather than repaired.
inline constexpr double kRotationAcceptance = 1e-6;

double orthonormality_drift(const Mat3& r);

// Closest rotation in the Frobenius sense (polar factor of the SVD).
Mat3 nearest_rotation(const Mat3& m);

/// Rigid transform x -> R x + t. Rotation is kept orthonormal with det +1.
class SE3Pose {
 public:
  SE3Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  // Throws kInvalidArgument if `rotation` is not within kRotationAcceptance of SO(3)
  // or any entry is non-finite.
  SE3Pose(const Mat3& rotation, const Vec3& translation);

  static SE3Pose identity() { return {}; }
  static SE3Pose from_translation(const Vec3& t) { return SE3Pose(Mat3::Identity(), t); }
  static SE3Pose from_matrix(const Mat4& m);
  // 9 rotation entries row-major followed by 3 translation entries.
  static SE3Pose from_flat(std::span<const double, 12> values);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& x) const { return rotation_ * x + translation_; }
  Mat4 matrix() const;
  std::array<double, 12> flat() const;

  SE3Pose with_translation(const Vec3& t) const;

 private:
  struct Unchecked {};
  SE3Pose(Unchecked, const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}
  friend SE3Pose compose(const SE3Pose& a, const SE3Pose& b);
  friend SE3Pose invert(const SE3Pose& p);

  Mat3 rotation_;
  Vec3 translation_;
};

// Applies b, then a.
SE3Pose compose(const SE3Pose& a, const SE3Pose& b);
SE3Pose invert(const SE3Pose& p);
// Pure rotation about the world Z axis.
SE3Pose rot_z(double theta);

// Angle of the relative rotation a^T b, in [0, pi].
double rotation_distance(const Mat3& a, const Mat3& b);
// Axis-angle vector with norm in [0, pi].
Vec3 log_rotation(const Mat3& r);
Mat3 exp_rotation(const Vec3& axis_angle);

// Wraps an angle into [-pi, pi).
double wrap_angle(double theta);

/// Points in meters with optional per-point feature vectors.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> points);
  PointCloud(std::vector<Vec3> points, std::vector<VecX> features);

  const std::vector<Vec3>& points() const { return points_; }
  bool has_features() const { return features_.has_value(); }
  const std::vector<VecX>& features() const;
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  Vec3 centroid() const;
  PointCloud with_features(std::vector<VecX> features) const;
  PointCloud subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<Vec3> points_;
  std::optional<std::vector<VecX>> features_;
};

// x -> R x + t for every point; features are carried unchanged.
PointCloud apply_pose(const SE3Pose& p, const PointCloud& cloud);

struct FrameTag {
  enum class Kind { kWorld, kFunctional };
  Kind kind = Kind::kWorld;
  std::string object_id;

  static FrameTag world() { return {}; }
  static FrameTag functional(std::string id) { return {Kind::kFunctional, std::move(id)}; }
  bool is_world() const { return kind == Kind::kWorld; }
  std::string to_string() const;
  bool operator==(const FrameTag&) const = default;
};

/// Waypoints with one gripper open-fraction in [0, 1] per waypoint, in a tagged frame.
class Trajectory {
 public:
  Trajectory(std::vector<SE3Pose> waypoints, std::vector<double> gripper, FrameTag frame);

  const std::vector<SE3Pose>& waypoints() const { return waypoints_; }
  const std::vector<double>& gripper() const { return gripper_; }
  const FrameTag& frame() const { return frame_; }
  std::size_t size() const { return waypoints_.size(); }
  const SE3Pose& back() const { return waypoints_.back(); }

  Trajectory retagged(FrameTag frame) const;
  // Applies `p` on the left of every waypoint and tags the result with `frame`.
  Trajectory transformed(const SE3Pose& p, FrameTag frame) const;
  // Throws kFrameMismatch if the frames differ.
  Trajectory concat(const Trajectory& tail) const;
  // inv(w_i) * w_{i+1} for every consecutive pair.
  std::vector<SE3Pose> relative_transforms() const;

 private:
  std::vector<SE3Pose> waypoints_;
  std::vector<double> gripper_;
  FrameTag frame_;
};

}  // namespace funcanon
