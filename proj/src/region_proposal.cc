#include "funcanon/region_proposal.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "funcanon/error.hpp"
#include "funcanon/kmeans.hpp"

namespace funcanon {

std::vector<Vec3> estimate_normals(const PointCloud& cloud, int neighbors) {
  const auto& pts = cloud.points();
  const std::size_t n = pts.size();
  const Vec3 center = n > 0 ? cloud.centroid() : Vec3::Zero();
  std::vector<Vec3> normals(n, Vec3::UnitZ());
  if (n < 3) return normals;
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(neighbors) + 1, n);
  std::vector<std::size_t> order(n);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) d2[j] = (pts[j] - pts[i]).squaredNorm();
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                      [&](std::size_t a, std::size_t b) { return d2[a] < d2[b] || (d2[a] == d2[b] && a < b); });
    Vec3 mean = Vec3::Zero();
    for (std::size_t q = 0; q < kk; ++q) mean += pts[order[q]];
    mean /= static_cast<double>(kk);
    Mat3 cov = Mat3::Zero();
    for (std::size_t q = 0; q < kk; ++q) {
      const Vec3 d = pts[order[q]] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    Vec3 normal = eig.eigenvectors().col(0).normalized();
    if (normal.dot(pts[i] - center) < 0.0) normal = -normal;
    normals[i] = normal;
  }
  return normals;
}

std::vector<VecX> GeometricFeatureProvider::features(const PointCloud& cloud) const {
  if (cloud.empty()) return {};
  Vec3 lo = cloud.points()[0];
  Vec3 hi = lo;
  for (const auto& p : cloud.points()) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  const double scale = extent > 0.0 ? 1.0 / extent : 1.0;
  const auto normals = estimate_normals(cloud, options_.neighbors);
  std::vector<VecX> out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    VecX f(6);
    f.head<3>() = (cloud.points()[i] - lo) * scale;
    f.tail<3>() = normals[i] * options_.normal_weight;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<VecX> FileFeatureProvider::features(const PointCloud& cloud) const {
  if (!cloud.has_features()) throw Error(ErrorCode::kInvalidArgument, "file provider: cloud carries no features");
  return cloud.features();
}

std::unique_ptr<FeatureProvider> make_feature_provider(const std::string& name) {
  if (name == "geometric") return std::make_unique<GeometricFeatureProvider>();
  if (name == "file") return std::make_unique<FileFeatureProvider>();
  throw Error(ErrorCode::kInvalidArgument, "unknown feature provider '" + name + "'");
}

std::vector<FunctionalRegion> propose_regions(const PointCloud& cloud, const FeatureProvider& provider,
                                              int m, std::uint64_t seed, const ProposalOptions& options) {
  if (cloud.empty()) throw Error(ErrorCode::kInvalidArgument, "propose_regions on empty cloud");
  const auto features = provider.features(cloud);
  if (features.size() != cloud.size()) {
    throw Error(ErrorCode::kInvalidArgument, "provider returned wrong feature count");
  }
  std::vector<VecX> space = features;
  if (options.append_coordinates) {
    for (std::size_t i = 0; i < space.size(); ++i) {
      VecX v(space[i].size() + 3);
      v << space[i], cloud.points()[i];
      space[i] = std::move(v);
    }
  }
  const auto km = kmeans_best_of(space, m, seed, options.restarts);

  std::vector<int> relabel(static_cast<std::size_t>(m), -1);
  int next = 0;
  for (int a : km.assignment) {
    if (relabel[a] < 0) relabel[a] = next++;
  }
  std::vector<FunctionalRegion> regions(static_cast<std::size_t>(m));
  for (int r = 0; r < m; ++r) regions[r].region_id = r;
  for (std::size_t i = 0; i < km.assignment.size(); ++i) {
    regions[relabel[km.assignment[i]]].point_indices.push_back(i);
  }
  for (auto& region : regions) {
    Vec3 c = Vec3::Zero();
    VecX fc = VecX::Zero(features[0].size());
    for (std::size_t i : region.point_indices) {
      c += cloud.points()[i];
      fc += features[i];
    }
    const double count = static_cast<double>(region.point_indices.size());
    region.centroid = c / count;
    region.feature_centroid = fc / count;
  }
  return regions;
}

json proposal_to_json(const std::string& object_id, int m, const std::vector<FunctionalRegion>& regions) {
  json j;
  j["object_id"] = object_id;
  j["m"] = m;
  json arr = json::array();
  for (const auto& r : regions) {
    json jr;
    jr["region_id"] = r.region_id;
    jr["point_indices"] = r.point_indices;
    jr["centroid"] = vec3_to_json(r.centroid);
    jr["feature_centroid"] = vec_to_json(r.feature_centroid);
    arr.push_back(std::move(jr));
  }
  j["regions"] = std::move(arr);
  return j;
}

std::vector<FunctionalRegion> proposal_from_json(const json& j) {
  try {
    std::vector<FunctionalRegion> out;
    for (const auto& jr : j.at("regions")) {
      FunctionalRegion r;
      r.region_id = jr.at("region_id").get<int>();
      r.point_indices = jr.at("point_indices").get<std::vector<std::size_t>>();
      r.centroid = vec3_from_json(jr.at("centroid"));
      r.feature_centroid = vec_from_json(jr.at("feature_centroid"));
      out.push_back(std::move(r));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("proposal: ") + e.what());
  }
}

std::vector<std::string> label_regions(const std::vector<FunctionalRegion>& regions,
                                       const std::vector<std::string>& point_labels) {
  std::vector<std::string> out;
  for (const auto& r : regions) {
    std::map<std::string, int> votes;
    for (std::size_t i : r.point_indices) {
      if (i >= point_labels.size()) throw Error(ErrorCode::kInvalidArgument, "label index out of range");
      ++votes[point_labels[i]];
    }
    std::string best;
    int best_count = -1;
    for (const auto& [label, count] : votes) {
      if (count > best_count) {
        best = label;
        best_count = count;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace funcanon
