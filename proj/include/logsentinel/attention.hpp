#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace logsentinel {

template <typename T>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Additive attention: score_t = v . tanh(W_a h_t).
template <typename T>
struct AttentionParams {
  MatrixT<T> projection;  // attn_dim x hidden_dim
  VectorT<T> score;       // attn_dim

  Eigen::Index attn_dim() const { return projection.rows(); }
  Eigen::Index hidden_dim() const { return projection.cols(); }
};

struct Attended {
  Eigen::VectorXd context;
  Eigen::VectorXd weights;
};

/// Softmax-weighted sum of the hidden states; one column per timestep.
Attended attend(const Eigen::MatrixXd& hidden_states, const AttentionParams<double>& params);

/// Rows are prediction instants, columns the L context positions (oldest
/// first). Every row sums to one.
struct AttentionMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weights;  // row-major

  double at(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {weights.data() + r * cols, cols}; }
};

template <typename T>
struct Model;
class SequenceDataset;

/// Attention weights of every window. Throws std::invalid_argument if the
/// model has no attention head.
AttentionMap extract_heatmap(const Model<double>& model, const SequenceDataset& windows);

enum class HeatmapScale { row_max, global_max };

/// Writes `<prefix>.pgm` (8-bit grayscale, one pixel row per prediction,
/// pixel = round(255 * w / max)) and `<prefix>.csv` with the raw weights.
void render_heatmap(const AttentionMap& map, const std::filesystem::path& prefix,
                    HeatmapScale scale = HeatmapScale::row_max);

/// Parses a CSV written by render_heatmap.
AttentionMap read_heatmap_csv(const std::filesystem::path& path);

/// Pixel intensities render_heatmap would emit, row-major.
std::vector<unsigned char> heatmap_pixels(const AttentionMap& map, HeatmapScale scale = HeatmapScale::row_max);

}  // namespace logsentinel
