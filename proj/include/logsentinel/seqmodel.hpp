#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "logsentinel/attention.hpp"
#include "logsentinel/vectorize.hpp"

namespace logsentinel {

enum class Precision { f32, f64 };

enum class Gate : int { input = 0, forget = 1, output = 2, candidate = 3 };

/// Gate weights are stacked row-wise in the order input, forget, output,
/// candidate; each block has hidden_dim rows.
template <typename T>
struct LstmLayerParams {
  MatrixT<T> input_weights;      // 4H x input_dim
  MatrixT<T> recurrent_weights;  // 4H x H
  VectorT<T> bias;               // 4H

  Eigen::Index input_dim() const { return input_weights.cols(); }
  Eigen::Index hidden_dim() const { return recurrent_weights.cols(); }

  auto input_block(Gate g) { return input_weights.middleRows(static_cast<int>(g) * hidden_dim(), hidden_dim()); }
  auto input_block(Gate g) const { return input_weights.middleRows(static_cast<int>(g) * hidden_dim(), hidden_dim()); }
  auto recurrent_block(Gate g) {
    return recurrent_weights.middleRows(static_cast<int>(g) * hidden_dim(), hidden_dim());
  }
  auto recurrent_block(Gate g) const {
    return recurrent_weights.middleRows(static_cast<int>(g) * hidden_dim(), hidden_dim());
  }
  auto bias_block(Gate g) { return bias.segment(static_cast<int>(g) * hidden_dim(), hidden_dim()); }
  auto bias_block(Gate g) const { return bias.segment(static_cast<int>(g) * hidden_dim(), hidden_dim()); }
};

/// Stacked LSTM over one-hot template ids, optional attention over the last
/// layer's states, and a dense softmax head. Gradients use the same type.
template <typename T>
struct Model {
  int num_classes = 0;
  int seq_len = 0;
  std::vector<LstmLayerParams<T>> layers;
  MatrixT<T> output_weights;  // num_classes x feature_dim
  VectorT<T> output_bias;     // num_classes
  std::optional<AttentionParams<T>> attention;

  Eigen::Index feature_dim() const { return layers.empty() ? 0 : layers.back().hidden_dim(); }
  bool has_attention() const { return attention.has_value(); }

  /// Every parameter tensor in a fixed order.
  std::vector<std::span<T>> tensors();
  std::vector<std::span<const T>> tensors() const;
  std::size_t parameter_count() const;

  Model zeros_like() const;

  template <typename U>
  Model<U> cast() const {
    Model<U> m;
    m.num_classes = num_classes;
    m.seq_len = seq_len;
    for (const auto& l : layers) {
      m.layers.push_back({l.input_weights.template cast<U>(), l.recurrent_weights.template cast<U>(),
                          l.bias.template cast<U>()});
    }
    m.output_weights = output_weights.template cast<U>();
    m.output_bias = output_bias.template cast<U>();
    if (attention) m.attention = AttentionParams<U>{attention->projection.template cast<U>(), attention->score.template cast<U>()};
    return m;
  }

  /// Throws std::invalid_argument when shapes are inconsistent.
  void validate() const;
};

using ModelParams = Model<double>;

struct Architecture {
  int num_classes = 0;
  int seq_len = 15;
  std::vector<int> hidden{256, 192};
  bool attention = false;
  int attn_dim = 64;

  nlohmann::json to_json() const;
  static Architecture from_json(const nlohmann::json& j);
};

Architecture architecture_of(const ModelParams& model);

/// Uniform +-1/sqrt(fan_in) weights, forget-gate bias 1, other biases 0.
ModelParams init_model(const Architecture& arch, std::uint64_t seed);
/// All parameters zero (useful as an analytic baseline).
ModelParams zero_model(const Architecture& arch);

/// One LSTM step; throws std::invalid_argument on a dimension mismatch.
std::pair<Eigen::VectorXd, Eigen::VectorXd> lstm_cell_forward(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
                                                              const Eigen::VectorXd& c_prev,
                                                              const LstmLayerParams<double>& params);

/// Class distribution for one window of exactly seq_len ids.
Eigen::VectorXd forward(const ModelParams& model, std::span<const int> window);

/// -w * ln(max(p_target, 1e-12)).
double loss(std::span<const double> probs, int target, double weight = 1.0);

/// Per-batch forward/backward buffers, reusable across batches.
template <typename T>
class Workspace {
 public:
  /// ids are laid out time-major: ids[t * batch + b].
  void forward(const Model<T>& model, std::span<const int> ids, int batch);

  /// Mean (class-weighted) cross-entropy of the last forward pass; overwrites
  /// `grads` with its exact gradient. `grads` must be shaped like the model.
  double backward(const Model<T>& model, std::span<const int> targets, std::span<const double> class_weights,
                  Model<T>& grads);

  double mean_loss(std::span<const int> targets, std::span<const double> class_weights) const;

  const MatrixT<T>& probs() const { return probs_; }
  /// Vector handed to the dense head (last hidden state or attention context), H x batch.
  const MatrixT<T>& features() const { return features_; }
  /// L x batch; empty without attention.
  const MatrixT<T>& attention_weights() const { return attn_weights_; }
  /// Last layer hidden state per timestep, H x batch.
  const MatrixT<T>& last_hidden(int t) const { return hidden_.back()[static_cast<std::size_t>(t)]; }

 private:
  int batch_ = 0;
  int steps_ = 0;
  std::vector<int> ids_;
  // [layer][t]
  std::vector<std::vector<MatrixT<T>>> gates_;
  std::vector<std::vector<MatrixT<T>>> cells_;
  std::vector<std::vector<MatrixT<T>>> hidden_;
  std::vector<MatrixT<T>> attn_tanh_;  // [t], attn_dim x batch
  MatrixT<T> attn_weights_;
  MatrixT<T> features_;
  MatrixT<T> probs_;
};

extern template class Workspace<float>;
extern template class Workspace<double>;

/// Batches windows [indices] of a dataset into time-major ids and targets.
void gather_batch(const SequenceDataset& data, std::span<const std::size_t> indices, std::vector<int>& ids,
                  std::vector<int>& targets);

/// Mean loss and its exact gradient over the given windows.
std::pair<double, ModelParams> gradients(const ModelParams& model, const SequenceDataset& data,
                                         std::span<const std::size_t> indices,
                                         std::span<const double> class_weights = {});

struct Prediction {
  std::vector<int> classes;
  std::vector<double> probs;  // row-major, windows x num_classes
  int num_classes = 0;

  std::span<const double> row(std::size_t i) const {
    return {probs.data() + i * static_cast<std::size_t>(num_classes), static_cast<std::size_t>(num_classes)};
  }
};

Prediction predict(const ModelParams& model, const SequenceDataset& windows, std::size_t batch_size = 1024,
                   Precision precision = Precision::f64);

struct TrainConfig {
  int max_epochs = 20;
  int batch_size = 128;
  double early_stop_delta = 1e-5;
  double val_frac = 0.2;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::vector<double> class_weights;  // empty: unweighted
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  Precision precision = Precision::f32;

  void validate() const;
  nlohmann::json to_json() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  double initial_loss = 0.0;
  std::vector<EpochStats> epochs;
  bool stopped_early = false;
  int epochs_run = 0;
  std::size_t train_windows = 0;
  std::size_t val_windows = 0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  ModelParams model;
  TrainReport report;
};

/// Adam mini-batch training on the chronological train split with early
/// stopping on consecutive epoch training losses and one checkpoint per epoch.
TrainResult train(const SequenceDataset& dataset, const Architecture& arch, const TrainConfig& config);

struct Checkpoint {
  ModelParams model;
  int epoch = 0;
  nlohmann::json config;  // resolved configuration echo
  std::string rng_state;
};

/// Versioned little-endian binary; see docs in README.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace logsentinel
