#include "logsentinel/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace logsentinel {

namespace {

double sparse_dot(const PointSet& p, std::size_t row, const double* dense) {
  double s = 0.0;
  for (auto k = p.row_ptr[row]; k < p.row_ptr[row + 1]; ++k) s += p.values[k] * dense[p.col_idx[k]];
  return s;
}

// Exact squared distance between a sparse row and a dense centroid.
double sq_distance(const PointSet& p, std::size_t row, const double* c, double c_sq_norm) {
  double s = c_sq_norm;
  for (auto k = p.row_ptr[row]; k < p.row_ptr[row + 1]; ++k) {
    const double cj = c[p.col_idx[k]];
    const double diff = p.values[k] - cj;
    s += diff * diff - cj * cj;
  }
  return std::max(s, 0.0);
}

double row_distance_to_row(const PointSet& p, std::size_t a, std::size_t b) {
  // ||a||^2 + ||b||^2 - 2 a.b with a sorted-merge dot product.
  double dot = 0.0;
  auto i = p.row_ptr[a], ie = p.row_ptr[a + 1];
  auto j = p.row_ptr[b], je = p.row_ptr[b + 1];
  while (i < ie && j < je) {
    if (p.col_idx[i] == p.col_idx[j]) dot += p.values[i++] * p.values[j++];
    else if (p.col_idx[i] < p.col_idx[j]) ++i;
    else ++j;
  }
  return std::max(p.sq_norms[a] + p.sq_norms[b] - 2.0 * dot, 0.0);
}

class Lloyd {
 public:
  Lloyd(const PointSet& points, int k) : p_(points), k_(k), d_(points.cols) {}

  ClusterModel run(std::uint64_t seed, int max_iter) {
    ClusterModel m;
    m.k = k_;
    m.dims = d_;
    m.seed = seed;
    m.centroids.assign(static_cast<std::size_t>(k_) * d_, 0.0);
    m.assignments.assign(p_.rows, -1);
    seed_plus_plus(m, seed);

    dist_.assign(p_.rows, 0.0);
    for (int it = 0; it < max_iter; ++it) {
      const bool changed = assign(m);
      if (!changed && it > 0) break;
      repair_empty(m);
      update(m);
      m.iterations = it + 1;
      m.inertia_history.push_back(inertia(m, p_));
    }
    if (transfer(m, max_iter)) m.inertia_history.push_back(inertia(m, p_));
    m.inertia = inertia(m, p_);
    return m;
  }

 private:
  void set_centroid_to_row(ClusterModel& m, int c, std::size_t row) {
    double* dst = m.centroids.data() + static_cast<std::size_t>(c) * d_;
    std::fill(dst, dst + d_, 0.0);
    for (auto k = p_.row_ptr[row]; k < p_.row_ptr[row + 1]; ++k) dst[p_.col_idx[k]] = p_.values[k];
  }

  void seed_plus_plus(ClusterModel& m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<char> chosen(p_.rows, 0);
    std::vector<double> best(p_.rows, std::numeric_limits<double>::infinity());
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, p_.rows - 1)(rng);
    std::size_t pick = first;
    for (int c = 0; c < k_; ++c) {
      if (c > 0) {
        double total = 0.0;
        for (std::size_t i = 0; i < p_.rows; ++i) total += best[i];
        if (total > 0.0) {
          double r = std::uniform_real_distribution<double>(0.0, total)(rng);
          pick = p_.rows;
          for (std::size_t i = 0; i < p_.rows; ++i) {
            if (best[i] <= 0.0) continue;
            pick = i;
            r -= best[i];
            if (r < 0.0) break;
          }
        } else {
          // Every remaining point coincides with a center: take an unused row.
          std::vector<std::size_t> free;
          for (std::size_t i = 0; i < p_.rows; ++i)
            if (!chosen[i]) free.push_back(i);
          pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
        }
      }
      chosen[pick] = 1;
      set_centroid_to_row(m, c, pick);
      for (std::size_t i = 0; i < p_.rows; ++i) best[i] = std::min(best[i], row_distance_to_row(p_, i, pick));
    }
  }

  // Nearest-centroid assignment; a point only moves when another centroid is
  // strictly closer.
  bool assign(ClusterModel& m) {
    std::vector<double> c_norm(static_cast<std::size_t>(k_));
    for (int c = 0; c < k_; ++c) {
      double s = 0.0;
      for (double v : m.centroid(c)) s += v * v;
      c_norm[static_cast<std::size_t>(c)] = s;
    }
    bool changed = false;
#pragma omp parallel for reduction(|| : changed) schedule(static)
    for (std::size_t i = 0; i < p_.rows; ++i) {
      const int cur = m.assignments[i];
      int best_c = cur;
      double best_d = cur >= 0 ? sq_distance(p_, i, m.centroid(cur).data(), c_norm[static_cast<std::size_t>(cur)])
                               : std::numeric_limits<double>::infinity();
      for (int c = 0; c < k_; ++c) {
        if (c == cur) continue;
        const double dist = p_.sq_norms[i] - 2.0 * sparse_dot(p_, i, m.centroid(c).data()) +
                            c_norm[static_cast<std::size_t>(c)];
        if (best_c < 0 || dist < best_d - 1e-12 * (1.0 + best_d)) {
          // Confirm with the exact form before switching.
          const double exact = sq_distance(p_, i, m.centroid(c).data(), c_norm[static_cast<std::size_t>(c)]);
          if (exact < best_d) {
            best_d = exact;
            best_c = c;
          }
        }
      }
      changed = changed || best_c != cur;
      m.assignments[i] = best_c;
      dist_[i] = best_d;
    }
    return changed;
  }

  void repair_empty(ClusterModel& m) {
    std::vector<std::size_t> size(static_cast<std::size_t>(k_), 0);
    for (int a : m.assignments) ++size[static_cast<std::size_t>(a)];
    for (int c = 0; c < k_; ++c) {
      if (size[static_cast<std::size_t>(c)] != 0) continue;
      std::size_t victim = p_.rows;
      double far = -1.0;
      for (std::size_t i = 0; i < p_.rows; ++i) {
        if (size[static_cast<std::size_t>(m.assignments[i])] > 1 && dist_[i] > far) {
          far = dist_[i];
          victim = i;
        }
      }
      if (victim == p_.rows) break;  // cannot happen while rows >= k
      --size[static_cast<std::size_t>(m.assignments[victim])];
      m.assignments[victim] = c;
      size[static_cast<std::size_t>(c)] = 1;
      dist_[victim] = 0.0;
    }
  }

  void update(ClusterModel& m) {
    std::fill(m.centroids.begin(), m.centroids.end(), 0.0);
    std::vector<std::size_t> size(static_cast<std::size_t>(k_), 0);
    for (std::size_t i = 0; i < p_.rows; ++i) {
      const auto c = static_cast<std::size_t>(m.assignments[i]);
      ++size[c];
      double* dst = m.centroids.data() + c * d_;
      for (auto k = p_.row_ptr[i]; k < p_.row_ptr[i + 1]; ++k) dst[p_.col_idx[k]] += p_.values[k];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k_); ++c) {
      if (size[c] == 0) continue;
      const double inv = 1.0 / static_cast<double>(size[c]);
      for (std::size_t j = 0; j < d_; ++j) m.centroids[c * d_ + j] *= inv;
    }
  }

  /// Hartigan single-point transfers from a Lloyd fixpoint: a point moves
  /// when that lowers the total inertia once both centroids are updated.
  bool transfer(ClusterModel& m, int max_passes) {
    if (k_ < 2) return false;
    std::vector<std::size_t> size(static_cast<std::size_t>(k_), 0);
    for (int a : m.assignments) ++size[static_cast<std::size_t>(a)];
    std::vector<double> c_norm(static_cast<std::size_t>(k_));
    auto refresh_norm = [&](int c) {
      double t = 0.0;
      for (double v : m.centroid(c)) t += v * v;
      c_norm[static_cast<std::size_t>(c)] = t;
    };
    for (int c = 0; c < k_; ++c) refresh_norm(c);
    auto shift = [&](int c, std::size_t row, double sign) {
      const auto n = static_cast<double>(size[static_cast<std::size_t>(c)]);
      double* dst = m.centroids.data() + static_cast<std::size_t>(c) * d_;
      const double next = n + sign;
      for (std::size_t j = 0; j < d_; ++j) dst[j] *= n / next;
      for (auto k = p_.row_ptr[row]; k < p_.row_ptr[row + 1]; ++k) dst[p_.col_idx[k]] += sign * p_.values[k] / next;
    };
    bool moved_any = false;
    for (int pass = 0; pass < max_passes; ++pass) {
      bool moved = false;
      for (std::size_t i = 0; i < p_.rows; ++i) {
        const int a = m.assignments[i];
        const auto na = static_cast<double>(size[static_cast<std::size_t>(a)]);
        if (na < 2) continue;
        const double remove = na / (na - 1.0) * sq_distance(p_, i, m.centroid(a).data(), c_norm[static_cast<std::size_t>(a)]);
        int best = -1;
        double best_add = remove - 1e-12 * (1.0 + remove);
        for (int b = 0; b < k_; ++b) {
          if (b == a) continue;
          const auto nb = static_cast<double>(size[static_cast<std::size_t>(b)]);
          const double add = nb / (nb + 1.0) * sq_distance(p_, i, m.centroid(b).data(), c_norm[static_cast<std::size_t>(b)]);
          if (add < best_add) {
            best_add = add;
            best = b;
          }
        }
        if (best < 0) continue;
        shift(a, i, -1.0);
        shift(best, i, 1.0);
        --size[static_cast<std::size_t>(a)];
        ++size[static_cast<std::size_t>(best)];
        refresh_norm(a);
        refresh_norm(best);
        m.assignments[i] = best;
        moved = true;
      }
      if (!moved) break;
      moved_any = true;
    }
    if (moved_any) update(m);
    return moved_any;
  }

  const PointSet& p_;
  int k_;
  std::size_t d_;
  std::vector<double> dist_;
};

}  // namespace

PointSet points_from_bow(const BowMatrix& matrix, bool binarize) {
  PointSet p;
  p.rows = matrix.rows;
  p.cols = matrix.cols;
  p.row_ptr = matrix.row_ptr;
  p.col_idx = matrix.col_idx;
  p.values.reserve(matrix.counts.size());
  for (auto c : matrix.counts) p.values.push_back(binarize ? 1.0 : static_cast<double>(c));
  p.sq_norms.assign(p.rows, 0.0);
  for (std::size_t i = 0; i < p.rows; ++i)
    for (auto k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) p.sq_norms[i] += p.values[k] * p.values[k];
  return p;
}

PointSet points_from_dense(std::span<const std::vector<double>> rows) {
  PointSet p;
  p.rows = rows.size();
  p.cols = rows.empty() ? 0 : rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != p.cols) throw std::invalid_argument("rows must share one dimension");
    double sq = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (r[j] == 0.0) continue;
      p.col_idx.push_back(static_cast<int>(j));
      p.values.push_back(r[j]);
      sq += r[j] * r[j];
    }
    p.row_ptr.push_back(p.col_idx.size());
    p.sq_norms.push_back(sq);
  }
  return p;
}

ClusterModel kmeans_fit(const PointSet& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (points.rows < static_cast<std::size_t>(k)) throw std::invalid_argument("fewer rows than clusters");
  if (options.max_iter < 1 || options.n_init < 1) throw std::invalid_argument("max_iter and n_init must be positive");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k)};
  std::vector<std::uint64_t> run_seeds(static_cast<std::size_t>(options.n_init));
  {
    std::vector<std::uint32_t> raw(run_seeds.size() * 2);
    seq.generate(raw.begin(), raw.end());
    for (std::size_t i = 0; i < run_seeds.size(); ++i)
      run_seeds[i] = (static_cast<std::uint64_t>(raw[2 * i]) << 32) | raw[2 * i + 1];
  }
  Lloyd lloyd(points, k);
  ClusterModel best;
  for (std::size_t r = 0; r < run_seeds.size(); ++r) {
    ClusterModel m = lloyd.run(run_seeds[r], options.max_iter);
    if (r == 0 || m.inertia < best.inertia) best = std::move(m);
  }
  best.seed = seed;
  return best;
}

double inertia(const ClusterModel& model, const PointSet& points) {
  if (model.assignments.size() != points.rows) throw std::invalid_argument("model was not fit on these points");
  std::vector<std::vector<int>> support(static_cast<std::size_t>(model.k));
  for (int c = 0; c < model.k; ++c) {
    const auto cen = model.centroid(c);
    for (std::size_t j = 0; j < cen.size(); ++j)
      if (cen[j] != 0.0) support[static_cast<std::size_t>(c)].push_back(static_cast<int>(j));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i) {
    const int c = model.assignments[i];
    const auto cen = model.centroid(c);
    const auto& sup = support[static_cast<std::size_t>(c)];
    auto k = points.row_ptr[i];
    const auto ke = points.row_ptr[i + 1];
    std::size_t s = 0;
    while (k < ke || s < sup.size()) {
      double diff;
      if (s == sup.size() || (k < ke && points.col_idx[k] < sup[s])) {
        diff = points.values[k++];
      } else if (k == ke || sup[s] < points.col_idx[k]) {
        diff = cen[static_cast<std::size_t>(sup[s++])];
      } else {
        diff = points.values[k++] - cen[static_cast<std::size_t>(sup[s++])];
      }
      total += diff * diff;
    }
  }
  return total;
}

double bic_score(const ClusterModel& model, const PointSet& points, double variance_floor) {
  const double n = static_cast<double>(points.rows);
  const double d = static_cast<double>(points.cols);
  const double k = static_cast<double>(model.k);
  const double sse = inertia(model, points);
  const double variance = std::max(variance_floor, sse / (n * d));

  std::vector<std::size_t> size(static_cast<std::size_t>(model.k), 0);
  for (int a : model.assignments) ++size[static_cast<std::size_t>(a)];
  double log_lik = 0.0;
  for (auto s : size) {
    if (s > 0) log_lik += static_cast<double>(s) * std::log(static_cast<double>(s) / n);
  }
  log_lik -= 0.5 * n * d * std::log(2.0 * std::numbers::pi * variance);
  log_lik -= sse / (2.0 * variance);

  const double params = k * d + k;
  return params * std::log(n) - 2.0 * log_lik;
}

BicReport select_k(const PointSet& points, std::span<const int> k_range, std::uint64_t seed,
                   const KMeansOptions& options, double variance_floor) {
  if (k_range.empty()) throw std::invalid_argument("k_range must not be empty");
  std::vector<int> ks(k_range.begin(), k_range.end());
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  BicReport report;
  double best = std::numeric_limits<double>::infinity();
  for (int k : ks) {
    const auto model = kmeans_fit(points, k, seed + static_cast<std::uint64_t>(k), options);
    const double score = bic_score(model, points, variance_floor);
    report.scores[k] = score;
    if (score < best) {
      best = score;
      report.selected_k = k;
    }
  }
  return report;
}

OccupancyHistogram occupancy(const ClusterModel& model) {
  OccupancyHistogram h;
  std::vector<std::size_t> size(static_cast<std::size_t>(model.k), 0);
  for (int a : model.assignments) ++size[static_cast<std::size_t>(a)];
  const double n = static_cast<double>(model.assignments.size());
  for (int c = 0; c < model.k; ++c) {
    OccupancyEntry e;
    e.cluster = c;
    e.members = size[static_cast<std::size_t>(c)];
    e.fraction = n > 0 ? static_cast<double>(e.members) / n : 0.0;
    e.super_cluster = e.fraction >= 0.5;
    h.has_super_cluster = h.has_super_cluster || e.super_cluster;
    h.entries.push_back(e);
  }
  std::stable_sort(h.entries.begin(), h.entries.end(),
                   [](const OccupancyEntry& a, const OccupancyEntry& b) { return a.members > b.members; });
  return h;
}

}  // namespace logsentinel
