#pragma once

#include <numbers>
#include <vector>

#include "funcanon/geometry.hpp"
#include "funcanon/random.hpp"

namespace funcanon::testing {

inline Vec3 random_vec3(Rng& rng, double scale = 1.0) {
  return Vec3(rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale));
}

// Uniform random rotation from a normalized Gaussian quaternion.
inline Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

inline SE3Pose random_pose(Rng& rng, double scale = 1.0) {
  return SE3Pose(random_rotation(rng), random_vec3(rng, scale));
}

inline Trajectory random_trajectory(Rng& rng, int n, FrameTag frame = FrameTag::world()) {
  std::vector<SE3Pose> w;
  std::vector<double> g;
  for (int i = 0; i < n; ++i) {
    w.push_back(random_pose(rng));
    g.push_back(rng.uniform());
  }
  return Trajectory(std::move(w), std::move(g), std::move(frame));
}

// Homogeneous 4x4 product by explicit loops.
inline Mat4 matmul4(const Mat4& a, const Mat4& b) {
  Mat4 out = Mat4::Zero();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

inline double max_abs_diff(const Mat4& a, const Mat4& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace funcanon::testing
