#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "logsentinel/error.hpp"
#include "logsentinel/seqmodel.hpp"

namespace logsentinel {

void TrainConfig::validate() const {
  if (max_epochs <= 0) throw std::invalid_argument("max_epochs must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (!(early_stop_delta > 0.0) || !std::isfinite(early_stop_delta)) {
    throw std::invalid_argument("early_stop_delta must be positive and finite");
  }
  if (!(val_frac > 0.0 && val_frac < 1.0)) throw std::invalid_argument("val_frac must be in (0, 1)");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw std::invalid_argument("invalid Adam hyperparameters");
  }
  for (double w : class_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("class weights must be positive");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"max_epochs", max_epochs},
                        {"batch_size", batch_size},
                        {"early_stop_delta", early_stop_delta},
                        {"val_frac", val_frac},
                        {"learning_rate", learning_rate},
                        {"beta1", beta1},
                        {"beta2", beta2},
                        {"epsilon", epsilon},
                        {"seed", seed},
                        {"class_weights", class_weights},
                        {"checkpoint_dir", checkpoint_dir.string()},
                        {"precision", precision == Precision::f32 ? "f32" : "f64"}};
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : epochs) {
    curve.push_back({{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"train_accuracy", e.train_accuracy},
                     {"val_accuracy", e.val_accuracy}});
  }
  return nlohmann::json{{"initial_loss", initial_loss},   {"epochs", curve},
                        {"stopped_early", stopped_early}, {"epochs_run", epochs_run},
                        {"train_windows", train_windows}, {"val_windows", val_windows}};
}

namespace {

template <typename T>
class Adam {
 public:
  Adam(const Model<T>& like, const TrainConfig& cfg)
      : m_(like.zeros_like()), v_(like.zeros_like()), cfg_(cfg) {}

  void step(Model<T>& params, Model<T>& grads) {
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const T lr_t = static_cast<T>(cfg_.learning_rate * std::sqrt(1.0 - std::pow(b2, t_)) / (1.0 - std::pow(b1, t_)));
    const T eps_t = static_cast<T>(cfg_.epsilon * std::sqrt(1.0 - std::pow(b2, t_)));
    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = m_.tensors();
    auto v = v_.tensors();
    using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const auto n = static_cast<Eigen::Index>(p[k].size());
      Eigen::Map<Arr> pk(p[k].data(), n), gk(g[k].data(), n), mk(m[k].data(), n), vk(v[k].data(), n);
      mk = static_cast<T>(b1) * mk + static_cast<T>(1.0 - b1) * gk;
      vk = static_cast<T>(b2) * vk + static_cast<T>(1.0 - b2) * gk.square();
      pk -= lr_t * mk / (vk.sqrt() + eps_t);
    }
  }

 private:
  Model<T> m_, v_;
  const TrainConfig& cfg_;
  int t_ = 0;
};

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

template <typename T>
double dataset_loss(const Model<T>& model, const SequenceDataset& data, std::span<const double> cw,
                    std::size_t batch) {
  Workspace<T> ws;
  std::vector<std::size_t> idx;
  std::vector<int> ids, targets;
  double total = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch) {
    const auto end = std::min(data.size(), begin + batch);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    gather_batch(data, idx, ids, targets);
    ws.forward(model, ids, static_cast<int>(idx.size()));
    total += ws.mean_loss(targets, cw) * static_cast<double>(idx.size());
  }
  return data.empty() ? 0.0 : total / static_cast<double>(data.size());
}

template <typename T>
double accuracy(const Model<T>& model, const SequenceDataset& data, std::size_t batch) {
  if (data.empty()) return 0.0;
  Workspace<T> ws;
  std::vector<std::size_t> idx;
  std::vector<int> ids, targets;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch) {
    const auto end = std::min(data.size(), begin + batch);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    gather_batch(data, idx, ids, targets);
    ws.forward(model, ids, static_cast<int>(idx.size()));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      Eigen::Index arg = 0;
      ws.probs().col(static_cast<Eigen::Index>(b)).maxCoeff(&arg);
      if (arg == targets[b]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

template <typename T>
TrainResult train_impl(const SequenceDataset& dataset, const Architecture& arch, const TrainConfig& cfg) {
  auto [train_set, val_set] = split(dataset, cfg.val_frac);
  if (train_set.empty()) throw std::invalid_argument("training split is empty");

  std::mt19937_64 rng(cfg.seed);
  Model<T> model = init_model(arch, cfg.seed).template cast<T>();
  Model<T> grads = model.zeros_like();
  Adam<T> adam(model, cfg);
  const std::span<const double> cw(cfg.class_weights);

  nlohmann::json echo{{"train", cfg.to_json()}, {"architecture", arch.to_json()}};
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  TrainReport report;
  report.train_windows = train_set.size();
  report.val_windows = val_set.size();
  const auto eval_batch = static_cast<std::size_t>(std::max(cfg.batch_size, 512));
  report.initial_loss = dataset_loss(model, train_set, cw, eval_batch);
  double previous = report.initial_loss;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  Workspace<T> ws;
  std::vector<int> ids, targets;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_no = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += bs, ++batch_no) {
      const auto end = std::min(order.size(), begin + bs);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      gather_batch(train_set, idx, ids, targets);
      ws.forward(model, ids, static_cast<int>(idx.size()));
      for (std::size_t b = 0; b < idx.size(); ++b) {
        Eigen::Index arg = 0;
        ws.probs().col(static_cast<Eigen::Index>(b)).maxCoeff(&arg);
        if (arg == targets[b]) ++correct;
      }
      const double l = ws.backward(model, targets, cw, grads);
      if (!std::isfinite(l)) {
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no));
      }
      loss_sum += l * static_cast<double>(idx.size());
      adam.step(model, grads);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    stats.val_accuracy = accuracy(model, val_set, eval_batch);
    report.epochs.push_back(stats);
    report.epochs_run = epoch;

    if (!cfg.checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch);
      save_checkpoint(cfg.checkpoint_dir / name, Checkpoint{model.template cast<double>(), epoch, echo, rng_state(rng)});
    }
    if (std::abs(stats.train_loss - previous) < cfg.early_stop_delta) {
      report.stopped_early = epoch < cfg.max_epochs;
      break;
    }
    previous = stats.train_loss;
  }
  return TrainResult{model.template cast<double>(), std::move(report)};
}

}  // namespace

TrainResult train(const SequenceDataset& dataset, const Architecture& arch_in, const TrainConfig& config) {
  config.validate();
  Architecture arch = arch_in;
  if (arch.num_classes <= 0) arch.num_classes = dataset.num_classes();
  if (arch.num_classes != dataset.num_classes()) throw std::invalid_argument("architecture/dataset class count mismatch");
  if (arch.seq_len != dataset.seq_len()) throw std::invalid_argument("architecture/dataset sequence length mismatch");
  if (!config.class_weights.empty() && config.class_weights.size() != static_cast<std::size_t>(arch.num_classes)) {
    throw std::invalid_argument("class_weights must have one entry per class");
  }
  if (config.precision == Precision::f32) return train_impl<float>(dataset, arch, config);
  return train_impl<double>(dataset, arch, config);
}

}  // namespace logsentinel
