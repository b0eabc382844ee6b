#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "../oracles.hpp"
#include "logsentinel/cluster.hpp"

using namespace logsentinel;

namespace {

std::vector<std::vector<double>> random_points(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> pts(n, std::vector<double>(d));
  for (auto& p : pts)
    for (auto& v : p) v = g(rng);
  return pts;
}

}  // namespace

TEST_CASE("separable 1-D points") {
  const std::vector<std::vector<double>> rows{{0}, {0}, {10}, {10}};
  const auto m = kmeans_fit(points_from_dense(rows), 2, 1);
  CHECK(m.inertia == 0.0);
  std::set<double> centers{m.centroids[0], m.centroids[1]};
  CHECK(centers == std::set<double>{0.0, 10.0});
  CHECK(m.assignments[0] == m.assignments[1]);
  CHECK(m.assignments[2] != m.assignments[0]);
}

TEST_CASE("k equal to the row count gives zero inertia") {
  std::mt19937_64 rng(4);
  const auto pts = random_points(rng, 7, 3);
  const auto m = kmeans_fit(points_from_dense(pts), 7, 2);
  CHECK(m.inertia == doctest::Approx(0.0));
  std::set<int> used(m.assignments.begin(), m.assignments.end());
  CHECK(used.size() == 7);
}

TEST_CASE("precondition errors") {
  const std::vector<std::vector<double>> rows{{0}, {1}};
  CHECK_THROWS_AS(kmeans_fit(points_from_dense(rows), 3, 0), std::invalid_argument);
  CHECK_THROWS_AS(kmeans_fit(points_from_dense(rows), 0, 0), std::invalid_argument);
}

TEST_CASE("12 points in 2-D, k = 3, match the exhaustive optimum") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const auto pts = random_points(rng, 12, 2);
    const auto m = kmeans_fit(points_from_dense(pts), 3, static_cast<std::uint64_t>(trial));
    CHECK(m.inertia == doctest::Approx(oracle::kmeans_optimum(pts, 3)).epsilon(1e-9));
  }
}

TEST_CASE("inertia history never increases and matches the final model") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = random_points(rng, 60, 3);
    const auto m = kmeans_fit(points_from_dense(pts), 5, static_cast<std::uint64_t>(trial), {100, 1});
    REQUIRE_FALSE(m.inertia_history.empty());
    for (std::size_t i = 1; i < m.inertia_history.size(); ++i)
      CHECK(m.inertia_history[i] <= m.inertia_history[i - 1] * (1 + 1e-12));
    CHECK(m.inertia == doctest::Approx(m.inertia_history.back()));
  }
}

TEST_CASE("converged assignments are to the nearest centroid") {
  std::mt19937_64 rng(21);
  const auto pts = random_points(rng, 80, 4);
  const auto m = kmeans_fit(points_from_dense(pts), 6, 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double own = 0.0;
    std::vector<double> dist(6, 0.0);
    for (int c = 0; c < 6; ++c)
      for (std::size_t j = 0; j < 4; ++j) dist[static_cast<std::size_t>(c)] += std::pow(pts[i][j] - m.centroid(c)[j], 2);
    own = dist[static_cast<std::size_t>(m.assignments[i])];
    for (double d : dist) CHECK(own <= d + 1e-9);
  }
}

TEST_CASE("same seed reproduces centroids bit for bit") {
  std::mt19937_64 rng(30);
  const auto pts = points_from_dense(random_points(rng, 100, 3));
  const auto a = kmeans_fit(pts, 4, 77);
  const auto b = kmeans_fit(pts, 4, 77);
  CHECK(a.centroids == b.centroids);
  CHECK(a.assignments == b.assignments);
}

TEST_CASE("duplicate rows beyond the distinct count still fill every cluster") {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 10; ++i) rows.push_back({1.0, 0.0});
  for (int i = 0; i < 10; ++i) rows.push_back({0.0, 1.0});
  const auto m = kmeans_fit(points_from_dense(rows), 4, 5);
  std::set<int> used(m.assignments.begin(), m.assignments.end());
  CHECK(used.size() == 4);
  CHECK(m.inertia == 0.0);
}

TEST_CASE("bag-of-words input, raw and binarized") {
  BowMatrix b;
  b.rows = 3;
  b.cols = 2;
  b.row_ptr = {0, 1, 2, 4};
  b.col_idx = {0, 0, 0, 1};
  b.counts = {2, 1, 1, 3};
  const auto raw = points_from_bow(b);
  CHECK(raw.values == std::vector<double>{2, 1, 1, 3});
  CHECK(raw.sq_norms == std::vector<double>{4, 1, 10});
  const auto bin = points_from_bow(b, true);
  CHECK(bin.values == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("BIC of two identical points with k = 1 hits the variance floor") {
  const std::vector<std::vector<double>> rows{{3.0, 1.0}, {3.0, 1.0}};
  const auto pts = points_from_dense(rows);
  const auto m = kmeans_fit(pts, 1, 0);
  // n = 2, d = 2, SSE = 0, sigma^2 = 1e-6, p = k*d + k = 3:
  // ln L = 2 ln(2/2) - (2*2/2) ln(2 pi 1e-6), BIC = 3 ln 2 - 2 ln L.
  const double expected = 3.0 * std::log(2.0) + 4.0 * std::log(2.0 * std::numbers::pi * 1e-6);
  CHECK(bic_score(m, pts) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(bic_score(m, pts) == bic_score(m, pts));
}

TEST_CASE("BIC matches the closed form on random fits") {
  std::mt19937_64 rng(40);
  for (int trial = 0; trial < 10; ++trial) {
    const auto raw = random_points(rng, 30, 3);
    const auto m = kmeans_fit(points_from_dense(raw), 1 + trial % 4, static_cast<std::uint64_t>(trial));
    CHECK(bic_score(m, points_from_dense(raw)) ==
          doctest::Approx(oracle::bic(raw, m.assignments, m.k, 1e-6)).epsilon(1e-10));
  }
}

TEST_CASE("select_k finds two separable blobs") {
  std::mt19937_64 rng(50);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 60; ++i) rows.push_back({g(rng), g(rng)});
  for (int i = 0; i < 60; ++i) rows.push_back({10 + g(rng), 10 + g(rng)});
  const std::vector<int> ks{1, 2, 3, 4, 5};
  const auto pts = points_from_dense(rows);
  const auto r = select_k(pts, ks, 9);
  CHECK(r.selected_k == 2);
  CHECK(r.scores.size() == 5);
  for (const auto& [k, s] : r.scores) CHECK(r.scores.at(2) <= s);

  const std::vector<int> one{1};
  CHECK(select_k(pts, one, 9).selected_k == 1);
}

TEST_CASE("duplicate-heavy rows: BIC improves toward one cluster per distinct row") {
  // 200 rows that are exact copies of 20 distinct one-hot-like word vectors.
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> r(25, 0.0);
    const int t = i % 20;
    r[static_cast<std::size_t>(t)] = 1.0;
    r[static_cast<std::size_t>(20 + t % 5)] = 2.0;
    rows.push_back(r);
  }
  const auto pts = points_from_dense(rows);
  const std::vector<int> ks{2, 5, 10, 20};
  const auto r = select_k(pts, ks, 3);
  CHECK(r.scores.at(2) > r.scores.at(5));
  CHECK(r.scores.at(5) > r.scores.at(10));
  CHECK(r.scores.at(10) > r.scores.at(20));
  CHECK(r.selected_k == 20);
}

TEST_CASE("select_k prefers the simpler model when both fits are perfect") {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 10; ++i) rows.push_back({static_cast<double>(i % 2)});
  const std::vector<int> ks{3, 2};
  CHECK(select_k(points_from_dense(rows), ks, 0).selected_k == 2);
}

TEST_CASE("occupancy histogram") {
  ClusterModel m;
  m.k = 2;
  m.assignments = {0, 0, 0, 1};
  auto h = occupancy(m);
  REQUIRE(h.entries.size() == 2);
  CHECK(h.entries[0].cluster == 0);
  CHECK(h.entries[0].fraction == 0.75);
  CHECK(h.entries[0].super_cluster);
  CHECK_FALSE(h.entries[1].super_cluster);
  CHECK(h.has_super_cluster);

  m.k = 4;
  m.assignments = {0, 1, 2, 3, 0, 1, 2, 3};
  h = occupancy(m);
  CHECK_FALSE(h.has_super_cluster);

  m.k = 3;
  m.assignments = {0, 0, 1, 2};
  CHECK(occupancy(m).entries[0].super_cluster);

  std::mt19937_64 rng(1);
  m.k = 7;
  m.assignments.resize(1001);
  for (auto& a : m.assignments) a = static_cast<int>(rng() % 7);
  double sum = 0.0;
  for (const auto& e : occupancy(m).entries) sum += e.fraction;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}
