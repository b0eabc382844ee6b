#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "logsentinel/vectorize.hpp"

namespace logsentinel {

/// Real-valued rows in CSR form with cached squared norms. Bag-of-words
/// matrices and small dense test instances both convert to this.
struct PointSet {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<int> col_idx;
  std::vector<double> values;
  std::vector<double> sq_norms;
};

PointSet points_from_bow(const BowMatrix& matrix, bool binarize = false);
PointSet points_from_dense(std::span<const std::vector<double>> rows);

struct ClusterModel {
  int k = 0;
  std::size_t dims = 0;
  std::vector<double> centroids;  // k x dims, row-major
  std::vector<int> assignments;
  double inertia = 0.0;
  int iterations = 0;
  std::uint64_t seed = 0;
  std::vector<double> inertia_history;  // after every Lloyd iteration of the kept run

  std::span<const double> centroid(int c) const {
    return {centroids.data() + static_cast<std::size_t>(c) * dims, dims};
  }
};

struct KMeansOptions {
  int max_iter = 100;
  int n_init = 30;  // independent k-means++ restarts; the lowest inertia wins
};

/// Lloyd iterations from k-means++ seeding, then Hartigan single-point
/// transfers. Empty clusters are refilled with the point farthest from its
/// centroid. Inertia never increases between recorded steps. Throws std::invalid_argument when
/// k < 1 or rows < k.
ClusterModel kmeans_fit(const PointSet& points, int k, std::uint64_t seed, const KMeansOptions& options = {});

/// Sum of squared distances from each row to its assigned centroid.
double inertia(const ClusterModel& model, const PointSet& points);

/// BIC = p ln n - 2 ln L for a spherical Gaussian mixture sharing one
/// variance (floored at variance_floor); p = k * d + k. Lower is better.
double bic_score(const ClusterModel& model, const PointSet& points, double variance_floor = 1e-6);

struct BicReport {
  std::map<int, double> scores;
  int selected_k = 0;
};

/// Fits and scores every k; ties go to the smaller k.
BicReport select_k(const PointSet& points, std::span<const int> k_range, std::uint64_t seed,
                   const KMeansOptions& options = {}, double variance_floor = 1e-6);

struct OccupancyEntry {
  int cluster = 0;
  std::size_t members = 0;
  double fraction = 0.0;
  bool super_cluster = false;  // holds >= 50% of the points
};

struct OccupancyHistogram {
  std::vector<OccupancyEntry> entries;  // sorted by members, descending
  bool has_super_cluster = false;
};

OccupancyHistogram occupancy(const ClusterModel& model);

}  // namespace logsentinel
