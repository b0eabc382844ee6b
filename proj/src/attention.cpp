#include "logsentinel/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "logsentinel/error.hpp"
#include "logsentinel/seqmodel.hpp"

namespace logsentinel {

Attended attend(const Eigen::MatrixXd& hidden_states, const AttentionParams<double>& params) {
  if (hidden_states.cols() < 1) throw std::invalid_argument("attend needs at least one hidden state");
  if (hidden_states.rows() != params.hidden_dim() || params.score.size() != params.attn_dim()) {
    throw std::invalid_argument("attend: dimension mismatch");
  }
  Eigen::VectorXd scores = ((params.projection * hidden_states).array().tanh().matrix().transpose() * params.score);
  scores = (scores.array() - scores.maxCoeff()).exp().matrix();
  scores /= scores.sum();
  return {hidden_states * scores, scores};
}

AttentionMap extract_heatmap(const ModelParams& model, const SequenceDataset& windows) {
  if (!model.has_attention()) throw std::invalid_argument("model has no attention head");
  if (!windows.empty() && windows.seq_len() != model.seq_len) {
    throw std::invalid_argument("dataset and model sequence lengths differ");
  }
  AttentionMap map;
  map.rows = windows.size();
  map.cols = static_cast<std::size_t>(model.seq_len);
  map.weights.resize(map.rows * map.cols);
  Workspace<double> ws;
  std::vector<std::size_t> idx;
  std::vector<int> ids, targets;
  constexpr std::size_t kBatch = 512;
  for (std::size_t begin = 0; begin < windows.size(); begin += kBatch) {
    const auto end = std::min(windows.size(), begin + kBatch);
    idx.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) idx[i - begin] = i;
    gather_batch(windows, idx, ids, targets);
    ws.forward(model, ids, static_cast<int>(idx.size()));
    const auto& w = ws.attention_weights();
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t t = 0; t < map.cols; ++t)
        map.weights[i * map.cols + t] = w(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i - begin));
  }
  return map;
}

std::vector<unsigned char> heatmap_pixels(const AttentionMap& map, HeatmapScale scale) {
  std::vector<unsigned char> px(map.rows * map.cols, 0);
  double global = 0.0;
  for (double w : map.weights) global = std::max(global, w);
  for (std::size_t r = 0; r < map.rows; ++r) {
    double denom = global;
    if (scale == HeatmapScale::row_max) {
      denom = 0.0;
      for (double w : map.row(r)) denom = std::max(denom, w);
    }
    for (std::size_t c = 0; c < map.cols; ++c) {
      const double v = denom > 0.0 ? 255.0 * map.at(r, c) / denom : 0.0;
      px[r * map.cols + c] = static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return px;
}

void render_heatmap(const AttentionMap& map, const std::filesystem::path& prefix, HeatmapScale scale) {
  auto pgm_path = prefix;
  pgm_path += ".pgm";
  auto csv_path = prefix;
  csv_path += ".csv";

  std::ofstream pgm(pgm_path, std::ios::binary);
  if (!pgm) throw Error("cannot write " + pgm_path.string());
  pgm << "P5\n" << map.cols << ' ' << map.rows << "\n255\n";
  const auto px = heatmap_pixels(map, scale);
  pgm.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!pgm) throw Error("failed writing " + pgm_path.string());

  std::ofstream csv(csv_path);
  if (!csv) throw Error("cannot write " + csv_path.string());
  csv << "row";
  for (std::size_t c = 0; c < map.cols; ++c) csv << ",pos_" << c;
  csv << '\n';
  char buf[32];
  for (std::size_t r = 0; r < map.rows; ++r) {
    csv << r;
    for (double w : map.row(r)) {
      std::snprintf(buf, sizeof buf, "%.9f", w);
      csv << ',' << buf;
    }
    csv << '\n';
  }
  if (!csv) throw Error("failed writing " + csv_path.string());
}

AttentionMap read_heatmap_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  AttentionMap map;
  std::string line;
  if (!std::getline(in, line)) throw Error("empty heatmap CSV");
  map.cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      map.weights.push_back(std::stod(cell));
      ++n;
    }
    if (n != map.cols) throw Error("ragged heatmap CSV row");
    ++map.rows;
  }
  return map;
}

}  // namespace logsentinel
