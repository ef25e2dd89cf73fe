#pragma once

#include <map>
#include <optional>
#include <string>
#include <tuple>

#include "funcanon/recognition.hpp"

namespace funcanon {

struct FunctionalVector {
  std::string object_id;
  std::string verb;
  Role role = Role::kActive;
  Vec3 v = Vec3::Zero();  // normalized, centered model frame
};

enum class VectorNormalization {
  kPointMean,   // mean over the union of member points
  kRegionCount  // sum over member points divided by the number of accepted regions
};

// Throws kEmptyFunctionalSet if `fs` has no regions.
FunctionalVector functional_vector(const FunctionalSet& fs, const PointCloud& cloud,
                                   VectorNormalization mode = VectorNormalization::kPointMean);

struct FunctionalFrame {
  std::string object_id;
  double z_angle = 0.0;  // [-pi, pi)
  SE3Pose pose;          // rot_z(z_angle), zero translation
};

FunctionalFrame make_frame(std::string object_id, double z_angle);

struct ZAlignment {
  FunctionalFrame frame;  // for the source object
  double residual = 0.0;  // |rot_z(theta) v_s - v_t|^2
};

// Below this XY norm a functional center leaves the heading unconstrained.
inline constexpr double kDegenerateXY = 1e-9;

double z_objective(double theta, const Vec3& v_s, const Vec3& v_t);

// Heading theta minimizing |rot_z(theta) v_s - v_t|^2, closed form from the XY projections.
// Throws kDegenerateDirection if either XY projection is shorter than kDegenerateXY.
ZAlignment align_z_rotation(const FunctionalVector& v_s, const FunctionalVector& v_t);

// Unrestricted least-squares rotation taking direction v_s onto v_t (orthogonal Procrustes).
Mat3 align_so3(const Vec3& v_s, const Vec3& v_t);

struct ModelNormalization {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;  // multiplies centered coordinates
};

// Centroid to the origin, uniform scale to unit bounding-box diagonal.
std::pair<PointCloud, ModelNormalization> normalize_model(const PointCloud& cloud);
json normalization_to_json(const ModelNormalization& n);

/// First registered vector per (category, verb, role) is the anchor unless overridden.
class AnchorRegistry {
 public:
  void register_vector(const std::string& category, const FunctionalVector& fv);
  void set_anchor(const std::string& category, const FunctionalVector& fv);
  std::optional<FunctionalVector> anchor(const std::string& category, const std::string& verb, Role role) const;

 private:
  std::map<std::tuple<std::string, std::string, Role>, FunctionalVector> anchors_;
};

struct AlignmentManifest {
  std::string object_id;
  std::string category;
  std::string verb;
  Role role = Role::kActive;
  Vec3 v = Vec3::Zero();
  double z_angle = 0.0;
  std::string anchor_id;
  double residual = 0.0;

  FunctionalFrame frame() const { return make_frame(object_id, z_angle); }
  FunctionalVector vector() const { return {object_id, verb, role, v}; }
  // Functional vector expressed in the shared canonical heading: rot_z(z_angle) v.
  FunctionalVector canonical_vector() const;
};

json manifest_to_json(const AlignmentManifest& m);
AlignmentManifest manifest_from_json(const json& j);

struct Canonicalization {
  PointCloud cloud;  // rotated into the anchor's heading
  AlignmentManifest manifest;
};

// Throws kNoAnchor when no anchor is registered for (category, fs.verb, fs.role).
Canonicalization canonicalize(const std::string& object_id, const std::string& category, const PointCloud& cloud,
                              const FunctionalSet& fs, const AnchorRegistry& registry,
                              VectorNormalization mode = VectorNormalization::kPointMean);

}  // namespace funcanon
