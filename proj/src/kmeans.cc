#include "funcanon/kmeans.hpp"

#include <limits>
#include <random>

#include "funcanon/error.hpp"

namespace funcanon {

namespace {

// Uniform double in [0, 1) from the top 53 bits; independent of the standard library.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void validate(std::span<const VecX> features, int k) {
  if (features.empty()) throw Error(ErrorCode::kInvalidArgument, "kmeans on empty input");
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "kmeans needs k >= 1");
  if (static_cast<std::size_t>(k) > features.size()) {
    throw Error(ErrorCode::kInvalidArgument, "kmeans k exceeds the number of vectors");
  }
  const auto dim = features[0].size();
  for (const auto& f : features) {
    if (f.size() != dim) throw Error(ErrorCode::kInvalidArgument, "feature vectors differ in dimension");
    if (!f.allFinite()) throw Error(ErrorCode::kInvalidArgument, "non-finite feature vector");
  }
}

std::vector<VecX> plus_plus_seeds(std::span<const VecX> x, int k, std::mt19937_64& rng) {
  const std::size_t n = x.size();
  std::vector<VecX> centers;
  centers.push_back(x[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n))]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x[i] - centers.back()).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double r = uniform01(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    }
    centers.push_back(x[pick]);
  }
  return centers;
}

double total_inertia(std::span<const VecX> x, const std::vector<int>& assign,
                     const std::vector<VecX>& centers) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - centers[assign[i]]).squaredNorm();
  return s;
}

// Single-point moves that lower inertia, applied until none is left. A move of x from
// cluster a to b changes inertia by n_b/(n_b+1)|x-c_b|^2 - n_a/(n_a-1)|x-c_a|^2.
void hartigan_refine(std::span<const VecX> x, int k, KMeansResult& res) {
  std::vector<int> counts(k, 0);
  for (int a : res.assignment) ++counts[a];
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const int a = res.assignment[i];
      if (counts[a] < 2) continue;
      const double na = counts[a];
      const double remove_gain = na / (na - 1.0) * (x[i] - res.centroids[a]).squaredNorm();
      int best = -1;
      double best_delta = 0.0;
      for (int b = 0; b < k; ++b) {
        if (b == a) continue;
        const double nb = counts[b];
        const double delta = nb / (nb + 1.0) * (x[i] - res.centroids[b]).squaredNorm() - remove_gain;
        if (delta < best_delta) {
          best_delta = delta;
          best = b;
        }
      }
      // relative margin so rounding cannot cycle
      if (best < 0 || best_delta > -1e-12 * remove_gain) continue;
      const double nb = counts[best];
      res.centroids[a] = (res.centroids[a] * na - x[i]) / (na - 1.0);
      res.centroids[best] = (res.centroids[best] * nb + x[i]) / (nb + 1.0);
      --counts[a];
      ++counts[best];
      res.assignment[i] = best;
      moved = true;
    }
  }
  // recompute centroids exactly from the final partition
  std::vector<VecX> sums(k, VecX::Zero(x[0].size()));
  for (std::size_t i = 0; i < x.size(); ++i) sums[res.assignment[i]] += x[i];
  for (int c = 0; c < k; ++c) res.centroids[c] = sums[c] / static_cast<double>(counts[c]);
  const double refined = total_inertia(x, res.assignment, res.centroids);
  if (res.inertia_history.empty() || refined < res.inertia_history.back()) res.inertia_history.push_back(refined);
}

}  // namespace

KMeansResult kmeans(std::span<const VecX> x, int k, std::uint64_t seed, const KMeansOptions& options) {
  validate(x, k);
  const std::size_t n = x.size();
  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.centroids = plus_plus_seeds(x, k, rng);
  res.assignment.assign(n, -1);

  for (int it = 0; it < options.max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x[i] - res.centroids[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best != res.assignment[i]) {
        res.assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) {
      res.converged = true;
      break;
    }

    std::vector<int> counts(k, 0);
    for (int a : res.assignment) ++counts[a];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      // Reseed an empty cluster with the point farthest from its own centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[res.assignment[i]] < 2) continue;
        const double d = (x[i] - res.centroids[res.assignment[i]]).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --counts[res.assignment[far]];
      res.assignment[far] = c;
      counts[c] = 1;
    }

    const auto dim = x[0].size();
    std::vector<VecX> sums(k, VecX::Zero(dim));
    for (std::size_t i = 0; i < n; ++i) sums[res.assignment[i]] += x[i];
    for (int c = 0; c < k; ++c) res.centroids[c] = sums[c] / static_cast<double>(counts[c]);

    res.inertia_history.push_back(total_inertia(x, res.assignment, res.centroids));
    res.iterations = it + 1;
  }
  if (options.hartigan_refinement) hartigan_refine(x, k, res);
  res.inertia = total_inertia(x, res.assignment, res.centroids);
  return res;
}

KMeansResult kmeans_best_of(std::span<const VecX> x, int k, std::uint64_t seed, int restarts,
                            const KMeansOptions& options) {
  if (restarts < 1) throw Error(ErrorCode::kInvalidArgument, "restarts must be positive");
  KMeansResult best = kmeans(x, k, seed, options);
  for (int r = 1; r < restarts; ++r) {
    KMeansResult run = kmeans(x, k, seed + static_cast<std::uint64_t>(r), options);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

double partition_inertia(std::span<const VecX> x, std::span<const int> assignment, int k) {
  if (x.size() != assignment.size()) throw Error(ErrorCode::kInvalidArgument, "assignment size mismatch");
  if (x.empty()) return 0.0;
  std::vector<VecX> sums(k, VecX::Zero(x[0].size()));
  std::vector<int> counts(k, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    sums[assignment[i]] += x[i];
    ++counts[assignment[i]];
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int c = assignment[i];
    s += (x[i] - sums[c] / static_cast<double>(counts[c])).squaredNorm();
  }
  return s;
}

}  // namespace funcanon
