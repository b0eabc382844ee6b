#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "../oracles.hpp"
#include "logsentinel/attention.hpp"
#include "logsentinel/error.hpp"
#include "logsentinel/seqmodel.hpp"

using namespace logsentinel;
namespace fs = std::filesystem;

namespace {

AttentionParams<double> random_params(std::mt19937_64& rng, int attn, int hidden, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  AttentionParams<double> p{Eigen::MatrixXd(attn, hidden), Eigen::VectorXd(attn)};
  for (Eigen::Index i = 0; i < p.projection.size(); ++i) p.projection.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < p.score.size(); ++i) p.score(i) = u(rng);
  return p;
}

Eigen::MatrixXd random_states(std::mt19937_64& rng, int hidden, int L) {
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd h(hidden, L);
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = u(rng);
  return h;
}

}  // namespace

TEST_CASE("identical states get uniform weights") {
  std::mt19937_64 rng(1);
  const auto p = random_params(rng, 4, 6);
  Eigen::MatrixXd h = random_states(rng, 6, 1).replicate(1, 7);
  const auto a = attend(h, p);
  for (int t = 0; t < 7; ++t) CHECK(a.weights(t) == doctest::Approx(1.0 / 7).epsilon(1e-14));
  CHECK((a.context - h.col(0)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("single state gets all the weight") {
  std::mt19937_64 rng(2);
  const auto p = random_params(rng, 3, 5);
  const Eigen::MatrixXd h = random_states(rng, 5, 1);
  const auto a = attend(h, p);
  CHECK(a.weights.size() == 1);
  CHECK(a.weights(0) == 1.0);
  CHECK((a.context - h.col(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("attend matches the scalar reference") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int H = 1 + static_cast<int>(rng() % 8), A = 1 + static_cast<int>(rng() % 6), L = 1 + static_cast<int>(rng() % 20);
    const auto p = random_params(rng, A, H, 3.0);
    const auto h = random_states(rng, H, L);
    std::vector<oracle::Vec> states;
    for (int t = 0; t < L; ++t) states.emplace_back(h.col(t).data(), h.col(t).data() + H);
    const auto ref = oracle::attend(states, p);
    const auto a = attend(h, p);
    CHECK(std::abs(a.weights.sum() - 1.0) <= 1e-9);
    CHECK((a.weights.array() >= 0.0).all());
    for (int t = 0; t < L; ++t) CHECK(std::abs(a.weights(t) - ref.weights[static_cast<std::size_t>(t)]) < 1e-12);
    for (int k = 0; k < H; ++k) CHECK(std::abs(a.context(k) - ref.context[static_cast<std::size_t>(k)]) < 1e-12);
  }
}

TEST_CASE("permuting states permutes weights") {
  std::mt19937_64 rng(4);
  const auto p = random_params(rng, 5, 6, 2.0);
  const auto h = random_states(rng, 6, 9);
  std::vector<int> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd hp(6, 9);
  for (int t = 0; t < 9; ++t) hp.col(t) = h.col(perm[static_cast<std::size_t>(t)]);
  const auto a = attend(h, p);
  const auto b = attend(hp, p);
  for (int t = 0; t < 9; ++t) CHECK(b.weights(t) == doctest::Approx(a.weights(perm[static_cast<std::size_t>(t)])).epsilon(1e-14));
  CHECK((a.context - b.context).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("attend rejects bad shapes") {
  std::mt19937_64 rng(5);
  const auto p = random_params(rng, 3, 4);
  CHECK_THROWS_AS(attend(Eigen::MatrixXd(4, 0), p), std::invalid_argument);
  CHECK_THROWS_AS(attend(Eigen::MatrixXd::Zero(5, 3), p), std::invalid_argument);
}

TEST_CASE("one dominant position leaves a mostly dark row") {
  std::mt19937_64 rng(6);
  AttentionParams<double> p{Eigen::MatrixXd::Identity(1, 3), Eigen::VectorXd::Constant(1, 40.0)};
  for (int trial = 0; trial < 20; ++trial) {
    const int L = 15;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3, L);
    h.row(0).setConstant(-0.5);
    const int hot = static_cast<int>(rng() % L);
    h(0, hot) = 0.9;
    const auto a = attend(h, p);
    std::vector<double> w(a.weights.data(), a.weights.data() + L);
    std::nth_element(w.begin(), w.begin() + L / 2, w.end());
    CHECK(w[L / 2] <= 1.0 / L);
    Eigen::Index arg = 0;
    a.weights.maxCoeff(&arg);
    CHECK(arg == hot);
  }
}

TEST_CASE("heatmap rows are the per-window attention of the full model") {
  Architecture arch;
  arch.num_classes = 7;
  arch.seq_len = 6;
  arch.hidden = {5, 4};
  arch.attention = true;
  arch.attn_dim = 3;
  auto m = init_model(arch, 21);
  for (auto t : m.tensors())
    for (auto& v : t) v *= 3.0;
  std::mt19937_64 rng(7);
  std::vector<int> stream(80);
  for (auto& v : stream) v = static_cast<int>(rng() % 7);
  const auto d = make_windows(stream, 6, 7);
  const auto map = extract_heatmap(m, d);
  REQUIRE(map.rows == d.size());
  REQUIRE(map.cols == 6);
  for (std::size_t r = 0; r < map.rows; ++r) {
    const auto row = map.row(r);
    CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) <= 1e-9);
    const auto w = d[r];
    const auto ref = oracle::forward(m, w.context);
    for (std::size_t c = 0; c < 6; ++c) CHECK(std::abs(row[c] - ref.attention[c]) < 1e-12);
  }

  arch.attention = false;
  CHECK_THROWS_AS(extract_heatmap(init_model(arch, 1), d), std::invalid_argument);
}

TEST_CASE("pixels follow row-max and global-max scaling") {
  AttentionMap map;
  map.rows = 3;
  map.cols = 4;
  map.weights = {0.0, 0.5, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.1, 0.2, 0.3, 0.4};
  const auto px = heatmap_pixels(map);
  const std::vector<unsigned char> row_max{0, 255, 128, 128, 255, 255, 255, 255, 64, 128, 191, 255};
  CHECK(px == row_max);
  const auto g = heatmap_pixels(map, HeatmapScale::global_max);
  const std::vector<unsigned char> global{0, 255, 128, 128, 128, 128, 128, 128, 51, 102, 153, 204};
  CHECK(g == global);
}

TEST_CASE("rendered files round trip") {
  std::mt19937_64 rng(8);
  AttentionMap map;
  map.rows = 5;
  map.cols = 15;
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t r = 0; r < map.rows; ++r) {
    std::vector<double> row(map.cols);
    for (auto& v : row) v = std::pow(u(rng), 4);
    const double s = std::accumulate(row.begin(), row.end(), 0.0);
    for (auto v : row) map.weights.push_back(v / s);
  }
  const auto dir = fs::temp_directory_path() / "logsentinel_test_heatmap";
  fs::remove_all(dir);
  fs::create_directories(dir);
  render_heatmap(map, dir / "h");
  const auto back = read_heatmap_csv(dir / "h.csv");
  REQUIRE(back.rows == map.rows);
  REQUIRE(back.cols == map.cols);
  for (std::size_t i = 0; i < map.weights.size(); ++i) CHECK(std::abs(back.weights[i] - map.weights[i]) < 5e-7);

  std::ifstream pgm(dir / "h.pgm", std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  pgm >> magic >> w >> h >> maxval;
  pgm.get();
  CHECK(magic == "P5");
  CHECK(w == 15);
  CHECK(h == 5);
  CHECK(maxval == 255);
  std::vector<unsigned char> body(w * h);
  pgm.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body.size()));
  CHECK(pgm.gcount() == static_cast<std::streamsize>(body.size()));
  CHECK(body == heatmap_pixels(map));

  CHECK_THROWS_AS(render_heatmap(map, dir / "missing" / "h"), Error);
}
