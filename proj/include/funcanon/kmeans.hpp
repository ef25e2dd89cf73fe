#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "funcanon/geometry.hpp"

namespace funcanon {

struct KMeansOptions {
  int max_iterations = 300;
  // Hartigan single-point moves after Lloyd converges.
  bool hartigan_refinement = true;
};

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<VecX> centroids;
  double inertia = 0.0;
  // Inertia after every Lloyd update; non-increasing.
  std::vector<double> inertia_history;
  int iterations = 0;
  bool converged = false;
};

// Lloyd's algorithm with k-means++ seeding. Deterministic for fixed (features, k, seed).
// Throws kInvalidArgument on empty input, k < 1, k > n, ragged or non-finite vectors.
KMeansResult kmeans(std::span<const VecX> features, int k, std::uint64_t seed,
                    const KMeansOptions& options = {});

// Best (lowest inertia) of `restarts` runs seeded seed, seed+1, ...
KMeansResult kmeans_best_of(std::span<const VecX> features, int k, std::uint64_t seed, int restarts,
                            const KMeansOptions& options = {});

// Sum of squared distances from each vector to the mean of its cluster.
double partition_inertia(std::span<const VecX> features, std::span<const int> assignment, int k);

}  // namespace funcanon
