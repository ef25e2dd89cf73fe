#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "funcanon/geometry.hpp"
#include "funcanon/io.hpp"

namespace funcanon {

/// Maps a cloud to one D-vector per point. D is fixed per provider instance.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::string name() const = 0;
  virtual std::vector<VecX> features(const PointCloud& cloud) const = 0;
};

// Coordinates scaled into the unit bounding box (largest extent -> 1, shape preserved),
// concatenated with a weighted outward surface normal from a plane fit over the
// nearest neighbors. D = 6.
class GeometricFeatureProvider final : public FeatureProvider {
 public:
  struct Options {
    int neighbors = 8;
    double normal_weight = 0.2;
  };

  GeometricFeatureProvider() = default;
  explicit GeometricFeatureProvider(Options options) : options_(options) {}

  std::string name() const override { return "geometric"; }
  std::vector<VecX> features(const PointCloud& cloud) const override;

 private:
  Options options_;
};

// Features read alongside the points (PLY extra properties or the JSON "features" field).
class FileFeatureProvider final : public FeatureProvider {
 public:
  std::string name() const override { return "file"; }
  std::vector<VecX> features(const PointCloud& cloud) const override;
};

std::unique_ptr<FeatureProvider> make_feature_provider(const std::string& name);

// Outward unit normals from a k-nearest-neighbor plane fit.
std::vector<Vec3> estimate_normals(const PointCloud& cloud, int neighbors);

struct FunctionalRegion {
  int region_id = 0;
  std::vector<std::size_t> point_indices;
  Vec3 centroid = Vec3::Zero();
  VecX feature_centroid;
};

struct ProposalOptions {
  // Cluster on [features, coordinates] instead of features alone.
  bool append_coordinates = false;
  int restarts = 10;
};

inline constexpr int kDefaultRegionCount = 6;

// Clusters the provider's features into exactly m regions partitioning the cloud.
// Region ids follow the order of each cluster's lowest point index.
std::vector<FunctionalRegion> propose_regions(const PointCloud& cloud, const FeatureProvider& provider,
                                              int m, std::uint64_t seed,
                                              const ProposalOptions& options = {});

json proposal_to_json(const std::string& object_id, int m, const std::vector<FunctionalRegion>& regions);
std::vector<FunctionalRegion> proposal_from_json(const json& j);

// Majority label of each region's points; ties go to the lexicographically smallest label.
std::vector<std::string> label_regions(const std::vector<FunctionalRegion>& regions,
                                       const std::vector<std::string>& point_labels);

}  // namespace funcanon
