#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "funcanon/alignment.hpp"
#include "funcanon/error.hpp"
#include "funcanon/fixtures.hpp"
#include "test_util.hpp"

namespace funcanon {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kInvalidArgument;
}

FunctionalVector fv(const std::string& id, const Vec3& v) { return {id, "pour", Role::kActive, v}; }

FunctionalSet set_of(const std::string& id, std::vector<std::vector<std::size_t>> members) {
  FunctionalSet fs{id, "vessel", "pour", Role::kActive, {}, {}};
  int rid = 0;
  for (auto& m : members) {
    FunctionalRegion r;
    r.region_id = rid++;
    r.point_indices = std::move(m);
    fs.regions.push_back(r);
  }
  return fs;
}

// Angular gap on the circle.
double angle_gap(double a, double b) { return std::abs(wrap_angle(a - b)); }

// Minimizer over the 0.01 degree grid on [-180, 180).
std::pair<double, double> grid_search(const Vec3& vs, const Vec3& vt) {
  double best_theta = 0.0, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 36000; ++i) {
    const double th = (-180.0 + 0.01 * i) * kDeg;
    const Vec3 r(std::cos(th) * vs.x() - std::sin(th) * vs.y(), std::sin(th) * vs.x() + std::cos(th) * vs.y(), vs.z());
    const double obj = (r - vt).squaredNorm();
    if (obj < best) {
      best = obj;
      best_theta = th;
    }
  }
  return {best_theta, best};
}

// Label-selected indices of a fixture.
std::vector<std::size_t> indices_of(const fixtures::FixtureObject& f, const std::string& label) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < f.labels.size(); ++i)
    if (f.labels[i] == label) out.push_back(i);
  return out;
}

TEST(FunctionalVector, SymmetricPairIsZero) {
  const PointCloud c({Vec3(1, 0, 0), Vec3(-1, 0, 0)});
  EXPECT_EQ(functional_vector(set_of("o", {{0, 1}}), c).v, Vec3::Zero());
}

TEST(FunctionalVector, SinglePoint) {
  const PointCloud c({Vec3(1, 2, 3)});
  EXPECT_EQ(functional_vector(set_of("o", {{0}}), c).v, Vec3(1, 2, 3));
}

TEST(FunctionalVector, MatchesFlatSum) {
  Rng rng(1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(testing::random_vec3(rng));
  const PointCloud c(pts);
  Vec3 sum = Vec3::Zero();
  for (const auto& p : pts) sum += p;
  const auto v = functional_vector(set_of("o", {{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}}), c).v;
  EXPECT_LT((v - sum / 10.0).norm(), 1e-12);
  // region-count reading: same sum over two regions
  const auto v2 = functional_vector(set_of("o", {{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}}), c, VectorNormalization::kRegionCount).v;
  EXPECT_LT((v2 - sum / 2.0).norm(), 1e-12);
}

TEST(FunctionalVector, SharedPointsCountedOnce) {
  const PointCloud c({Vec3(0, 0, 0), Vec3(3, 0, 0)});
  EXPECT_LT((functional_vector(set_of("o", {{0, 1}, {1}}), c).v - Vec3(1.5, 0, 0)).norm(), 1e-15);
}

TEST(FunctionalVector, EmptySetFails) {
  const PointCloud c({Vec3(0, 0, 0)});
  EXPECT_EQ(code_of([&] { functional_vector(set_of("o", {}), c); }), ErrorCode::kEmptyFunctionalSet);
}

TEST(AlignZ, IdenticalVectors) {
  const auto a = align_z_rotation(fv("s", {1, 0, 0}), fv("t", {1, 0, 0}));
  EXPECT_EQ(a.frame.z_angle, 0.0);
  EXPECT_EQ(a.frame.pose.translation(), Vec3::Zero());
}

TEST(AlignZ, QuarterTurn) {
  EXPECT_NEAR(align_z_rotation(fv("s", {1, 0, 0}), fv("t", {0, 1, 0})).frame.z_angle, kPi / 2, 1e-15);
}

TEST(AlignZ, MatchesGridSearch) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const Vec3 vs = testing::random_vec3(rng), vt = testing::random_vec3(rng);
    const auto a = align_z_rotation(fv("s", vs), fv("t", vt));
    const auto [grid_theta, grid_best] = grid_search(vs, vt);
    EXPECT_LE(angle_gap(a.frame.z_angle, grid_theta), 0.02 * kDeg);
    EXPECT_LE(z_objective(a.frame.z_angle, vs, vt), grid_best + 1e-12);
    EXPECT_NEAR(a.residual, z_objective(a.frame.z_angle, vs, vt), 1e-12);
    EXPECT_GE(a.frame.z_angle, -kPi);
    EXPECT_LT(a.frame.z_angle, kPi);
  }
}

TEST(AlignZ, LocallyOptimal) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Vec3 vs = testing::random_vec3(rng), vt = testing::random_vec3(rng);
    const double th = align_z_rotation(fv("s", vs), fv("t", vt)).frame.z_angle;
    EXPECT_LE(z_objective(th, vs, vt), z_objective(th + kDeg, vs, vt));
    EXPECT_LE(z_objective(th, vs, vt), z_objective(th - kDeg, vs, vt));
  }
}

TEST(AlignZ, Equivariance) {
  Rng rng(4);
  for (int i = 0; i < 300; ++i) {
    const Vec3 vs = testing::random_vec3(rng), vt = testing::random_vec3(rng);
    const double phi = rng.uniform(-kPi, kPi);
    const double th = align_z_rotation(fv("s", vs), fv("t", vt)).frame.z_angle;
    const double th2 = align_z_rotation(fv("s", rot_z(phi).apply(vs)), fv("t", vt)).frame.z_angle;
    EXPECT_LE(angle_gap(th2, th - phi), 0.02 * kDeg);
  }
}

TEST(AlignZ, ZOffsetIndifference) {
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const Vec3 vs = testing::random_vec3(rng), vt = testing::random_vec3(rng);
    const Vec3 dz(0, 0, rng.uniform(-5, 5));
    const double th = align_z_rotation(fv("s", vs), fv("t", vt)).frame.z_angle;
    EXPECT_EQ(align_z_rotation(fv("s", vs + dz), fv("t", vt + dz)).frame.z_angle, th);
  }
}

TEST(AlignZ, DegenerateDirections) {
  EXPECT_EQ(code_of([] { align_z_rotation(fv("s", {0, 0, 1}), fv("t", {1, 0, 0})); }),
            ErrorCode::kDegenerateDirection);
  EXPECT_EQ(code_of([] { align_z_rotation(fv("s", {1, 0, 0}), fv("t", {1e-10, 0, 2})); }),
            ErrorCode::kDegenerateDirection);
}

TEST(AlignSo3, MapsDirectionOntoTarget) {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const Vec3 vs = testing::random_vec3(rng), vt = testing::random_vec3(rng);
    const Mat3 r = align_so3(vs, vt);
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    EXPECT_LT(((r * vs).normalized() - vt.normalized()).norm(), 1e-9);
  }
}

TEST(Normalize, CentroidAtOriginUnitDiagonal) {
  const auto kettle = fixtures::make_kettle();
  const auto [cloud, norm] = normalize_model(apply_pose(SE3Pose::from_translation({3, -2, 1}), kettle.cloud));
  EXPECT_LT(cloud.centroid().norm(), 1e-12);
  Vec3 lo = cloud.points()[0], hi = lo;
  for (const auto& p : cloud.points()) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  EXPECT_NEAR((hi - lo).norm(), 1.0, 1e-12);
  EXPECT_GT(norm.scale, 0.0);
}

struct Normalized {
  fixtures::FixtureObject object;
  PointCloud cloud;
};

Normalized normalized(fixtures::FixtureObject f) {
  PointCloud c = normalize_model(f.cloud).first;
  return {std::move(f), std::move(c)};
}

TEST(Canonicalize, AnchorToItselfIsIdentity) {
  const auto k = normalized(fixtures::make_kettle());
  const auto fs = set_of("kettle", {indices_of(k.object, "spout")});
  AnchorRegistry reg;
  reg.register_vector("vessel", functional_vector(fs, k.cloud));
  const auto c = canonicalize("kettle", "vessel", k.cloud, fs, reg);
  EXPECT_EQ(c.manifest.z_angle, 0.0);
  EXPECT_EQ(c.manifest.anchor_id, "kettle");
  EXPECT_NEAR(c.manifest.residual, 0.0, 1e-24);
}

TEST(Canonicalize, TeapotTurnsQuarterTowardKettle) {
  const auto k = normalized(fixtures::make_kettle());
  const auto t = normalized(fixtures::make_teapot());
  AnchorRegistry reg;
  reg.register_vector("vessel", functional_vector(set_of("kettle", {indices_of(k.object, "spout")}), k.cloud));
  const auto fs = set_of("teapot", {indices_of(t.object, "spout")});
  const auto c = canonicalize("teapot", "vessel", t.cloud, fs, reg);
  EXPECT_NEAR(c.manifest.z_angle, kPi / 2, 1e-2);
  // rotated cloud's functional direction lines up with the anchor's in XY
  const Vec3 rotated = functional_vector(fs, c.cloud).v;
  const Vec3 anchor = reg.anchor("vessel", "pour", Role::kActive)->v;
  EXPECT_LE(angle_gap(std::atan2(rotated.y(), rotated.x()), std::atan2(anchor.y(), anchor.x())), 0.02 * kDeg);
  EXPECT_LT((c.manifest.canonical_vector().v - rotated).norm(), 1e-12);
}

TEST(Canonicalize, MissingAnchor) {
  const auto k = normalized(fixtures::make_kettle());
  AnchorRegistry reg;
  EXPECT_EQ(code_of([&] { canonicalize("kettle", "vessel", k.cloud, set_of("kettle", {{0}}), reg); }),
            ErrorCode::kNoAnchor);
}

TEST(Canonicalize, ZAxisCenterIsDegenerate) {
  const PointCloud c({Vec3(0, 0, 1), Vec3(0, 0, -1), Vec3(1, 0, 0), Vec3(0, 0, 0.5)});
  AnchorRegistry reg;
  reg.register_vector("vessel", fv("anchor", {1, 0, 0}));
  EXPECT_EQ(code_of([&] { canonicalize("o", "vessel", c, set_of("o", {{0, 1, 3}}), reg); }),
            ErrorCode::kDegenerateDirection);
}

TEST(Registry, FirstRegisteredIsAnchorUnlessOverridden) {
  AnchorRegistry reg;
  reg.register_vector("vessel", fv("a", {1, 0, 0}));
  reg.register_vector("vessel", fv("b", {0, 1, 0}));
  EXPECT_EQ(reg.anchor("vessel", "pour", Role::kActive)->object_id, "a");
  reg.set_anchor("vessel", fv("b", {0, 1, 0}));
  EXPECT_EQ(reg.anchor("vessel", "pour", Role::kActive)->object_id, "b");
  EXPECT_FALSE(reg.anchor("vessel", "grasp", Role::kActive).has_value());
}

TEST(Manifest, JsonRoundTrip) {
  const AlignmentManifest m{"teapot", "vessel", "pour", Role::kActive, Vec3(0.1, -0.2, 0.3), 1.25, "kettle", 1e-3};
  const AlignmentManifest back = manifest_from_json(manifest_to_json(m));
  EXPECT_EQ(manifest_to_json(back), manifest_to_json(m));
  EXPECT_EQ(back.v, m.v);
  EXPECT_EQ(back.frame().pose.matrix(), rot_z(1.25).matrix());
}

}  // namespace
}  // namespace funcanon
