#include "logsentinel/seqmodel.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace logsentinel {

namespace {

template <typename Derived>
void sigmoid_inplace(Eigen::MatrixBase<Derived>&& m) {
  using T = typename Derived::Scalar;
  m = (T(1) / (T(1) + (-m.array()).exp())).matrix();
}

template <typename Derived>
void tanh_inplace(Eigen::MatrixBase<Derived>&& m) {
  m = m.array().tanh().matrix();
}

// Column-wise softmax, in place.
template <typename T>
void softmax_columns(MatrixT<T>& m) {
  for (Eigen::Index b = 0; b < m.cols(); ++b) {
    auto col = m.col(b);
    const T mx = col.maxCoeff();
    col = (col.array() - mx).exp().matrix();
    col /= col.sum();
  }
}

double target_weight(std::span<const double> class_weights, int target) {
  if (class_weights.empty()) return 1.0;
  return class_weights[static_cast<std::size_t>(target)];
}

}  // namespace

template <typename T>
std::vector<std::span<T>> Model<T>::tensors() {
  std::vector<std::span<T>> out;
  auto add = [&](auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
  for (auto& l : layers) {
    add(l.input_weights);
    add(l.recurrent_weights);
    add(l.bias);
  }
  if (attention) {
    add(attention->projection);
    add(attention->score);
  }
  add(output_weights);
  add(output_bias);
  return out;
}

template <typename T>
std::vector<std::span<const T>> Model<T>::tensors() const {
  std::vector<std::span<const T>> out;
  for (auto s : const_cast<Model<T>*>(this)->tensors()) out.emplace_back(s.data(), s.size());
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto s : tensors()) n += s.size();
  return n;
}

template <typename T>
Model<T> Model<T>::zeros_like() const {
  Model<T> z = *this;
  for (auto s : z.tensors()) std::fill(s.begin(), s.end(), T(0));
  return z;
}

template <typename T>
void Model<T>::validate() const {
  if (num_classes <= 0 || seq_len <= 0) throw std::invalid_argument("model needs positive num_classes and seq_len");
  if (layers.empty()) throw std::invalid_argument("model needs at least one recurrent layer");
  Eigen::Index in = num_classes;
  for (const auto& l : layers) {
    const auto H = l.hidden_dim();
    if (H <= 0 || l.recurrent_weights.rows() != 4 * H || l.input_weights.rows() != 4 * H || l.bias.size() != 4 * H ||
        l.input_dim() != in) {
      throw std::invalid_argument("inconsistent recurrent layer shapes");
    }
    in = H;
  }
  if (output_weights.rows() != num_classes || output_weights.cols() != in || output_bias.size() != num_classes) {
    throw std::invalid_argument("inconsistent output head shapes");
  }
  if (attention && (attention->projection.cols() != in || attention->score.size() != attention->projection.rows() ||
                    attention->projection.rows() <= 0)) {
    throw std::invalid_argument("inconsistent attention shapes");
  }
}

template struct Model<float>;
template struct Model<double>;

nlohmann::json Architecture::to_json() const {
  return nlohmann::json{{"num_classes", num_classes},
                        {"seq_len", seq_len},
                        {"hidden", hidden},
                        {"attention", attention},
                        {"attn_dim", attn_dim}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
  Architecture a;
  a.num_classes = j.at("num_classes").get<int>();
  a.seq_len = j.at("seq_len").get<int>();
  a.hidden = j.at("hidden").get<std::vector<int>>();
  a.attention = j.value("attention", false);
  a.attn_dim = j.value("attn_dim", 64);
  return a;
}

Architecture architecture_of(const ModelParams& model) {
  Architecture a;
  a.num_classes = model.num_classes;
  a.seq_len = model.seq_len;
  a.hidden.clear();
  for (const auto& l : model.layers) a.hidden.push_back(static_cast<int>(l.hidden_dim()));
  a.attention = model.has_attention();
  if (model.attention) a.attn_dim = static_cast<int>(model.attention->attn_dim());
  return a;
}

ModelParams zero_model(const Architecture& arch) {
  if (arch.num_classes <= 0 || arch.seq_len <= 0 || arch.hidden.empty()) {
    throw std::invalid_argument("architecture needs classes, sequence length and at least one layer");
  }
  ModelParams m;
  m.num_classes = arch.num_classes;
  m.seq_len = arch.seq_len;
  Eigen::Index in = arch.num_classes;
  for (int h : arch.hidden) {
    if (h <= 0) throw std::invalid_argument("hidden sizes must be positive");
    m.layers.push_back({Eigen::MatrixXd::Zero(4 * h, in), Eigen::MatrixXd::Zero(4 * h, h), Eigen::VectorXd::Zero(4 * h)});
    in = h;
  }
  if (arch.attention) {
    if (arch.attn_dim <= 0) throw std::invalid_argument("attn_dim must be positive");
    m.attention = AttentionParams<double>{Eigen::MatrixXd::Zero(arch.attn_dim, in), Eigen::VectorXd::Zero(arch.attn_dim)};
  }
  m.output_weights = Eigen::MatrixXd::Zero(arch.num_classes, in);
  m.output_bias = Eigen::VectorXd::Zero(arch.num_classes);
  return m;
}

ModelParams init_model(const Architecture& arch, std::uint64_t seed) {
  ModelParams m = zero_model(arch);
  std::mt19937_64 rng(seed);
  auto fill = [&](auto& mat, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < mat.size(); ++i) mat.data()[i] = u(rng);
  };
  for (auto& l : m.layers) {
    const double h = static_cast<double>(l.hidden_dim());
    fill(l.input_weights, 1.0 / std::sqrt(static_cast<double>(l.input_dim())));
    fill(l.recurrent_weights, 1.0 / std::sqrt(h));
    l.bias_block(Gate::forget).setOnes();
  }
  if (m.attention) {
    fill(m.attention->projection, 1.0 / std::sqrt(static_cast<double>(m.attention->hidden_dim())));
    fill(m.attention->score, 1.0 / std::sqrt(static_cast<double>(m.attention->attn_dim())));
  }
  fill(m.output_weights, 1.0 / std::sqrt(static_cast<double>(m.feature_dim())));
  return m;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> lstm_cell_forward(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
                                                              const Eigen::VectorXd& c_prev,
                                                              const LstmLayerParams<double>& p) {
  const auto H = p.hidden_dim();
  if (x.size() != p.input_dim() || h_prev.size() != H || c_prev.size() != H || p.bias.size() != 4 * H) {
    throw std::invalid_argument("lstm_cell_forward: dimension mismatch");
  }
  Eigen::VectorXd z = p.input_weights * x + p.recurrent_weights * h_prev + p.bias;
  sigmoid_inplace(z.head(3 * H));
  tanh_inplace(z.tail(H));
  const auto i = z.segment(0, H).array();
  const auto f = z.segment(H, H).array();
  const auto o = z.segment(2 * H, H).array();
  const auto g = z.segment(3 * H, H).array();
  Eigen::VectorXd c = (f * c_prev.array() + i * g).matrix();
  Eigen::VectorXd h = (o * c.array().tanh()).matrix();
  return {h, c};
}

template <typename T>
void Workspace<T>::forward(const Model<T>& model, std::span<const int> ids, int batch) {
  const int L = model.seq_len;
  const int B = batch;
  if (B <= 0) throw std::invalid_argument("empty batch");
  if (ids.size() != static_cast<std::size_t>(L) * static_cast<std::size_t>(B)) {
    throw std::invalid_argument("window length does not match the model's sequence length");
  }
  for (int id : ids) {
    if (id < 0 || id >= model.num_classes) throw std::invalid_argument("template id out of range for model");
  }
  batch_ = B;
  steps_ = L;
  ids_.assign(ids.begin(), ids.end());
  const auto nl = model.layers.size();
  gates_.resize(nl);
  cells_.resize(nl);
  hidden_.resize(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    const auto& p = model.layers[l];
    const auto H = p.hidden_dim();
    gates_[l].resize(static_cast<std::size_t>(L));
    cells_[l].resize(static_cast<std::size_t>(L));
    hidden_[l].resize(static_cast<std::size_t>(L));
    for (int t = 0; t < L; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      auto& z = gates_[l][ts];
      z.resize(4 * H, B);
      if (l == 0) {
        for (int b = 0; b < B; ++b) z.col(b) = p.input_weights.col(ids_[ts * static_cast<std::size_t>(B) + static_cast<std::size_t>(b)]);
      } else {
        z.noalias() = p.input_weights * hidden_[l - 1][ts];
      }
      if (t > 0) z.noalias() += p.recurrent_weights * hidden_[l][ts - 1];
      z.colwise() += p.bias;
      sigmoid_inplace(z.topRows(3 * H));
      tanh_inplace(z.bottomRows(H));

      auto& c = cells_[l][ts];
      c = (z.topRows(H).array() * z.bottomRows(H).array()).matrix();
      if (t > 0) c.array() += z.middleRows(H, H).array() * cells_[l][ts - 1].array();
      hidden_[l][ts] = (z.middleRows(2 * H, H).array() * c.array().tanh()).matrix();
    }
  }

  const auto& top = hidden_.back();
  if (model.attention) {
    const auto& a = *model.attention;
    attn_tanh_.resize(static_cast<std::size_t>(L));
    attn_weights_.resize(L, B);
    for (int t = 0; t < L; ++t) {
      auto& e = attn_tanh_[static_cast<std::size_t>(t)];
      e.noalias() = a.projection * top[static_cast<std::size_t>(t)];
      tanh_inplace(e.leftCols(B));
      attn_weights_.row(t).noalias() = a.score.transpose() * e;
    }
    softmax_columns(attn_weights_);
    features_.setZero(top.front().rows(), B);
    for (int t = 0; t < L; ++t) {
      features_.array() += top[static_cast<std::size_t>(t)].array().rowwise() * attn_weights_.row(t).array();
    }
  } else {
    attn_weights_.resize(0, 0);
    features_ = top.back();
  }
  probs_.noalias() = model.output_weights * features_;
  probs_.colwise() += model.output_bias;
  softmax_columns(probs_);
}

template <typename T>
double Workspace<T>::mean_loss(std::span<const int> targets, std::span<const double> class_weights) const {
  double total = 0.0;
  for (int b = 0; b < batch_; ++b) {
    const int y = targets[static_cast<std::size_t>(b)];
    const double p = std::max(static_cast<double>(probs_(y, b)), 1e-12);
    total += -target_weight(class_weights, y) * std::log(p);
  }
  return total / batch_;
}

template <typename T>
double Workspace<T>::backward(const Model<T>& model, std::span<const int> targets,
                              std::span<const double> class_weights, Model<T>& grads) {
  const int L = steps_;
  const int B = batch_;
  if (targets.size() != static_cast<std::size_t>(B)) throw std::invalid_argument("one target per window required");
  if (!class_weights.empty() && class_weights.size() != static_cast<std::size_t>(model.num_classes)) {
    throw std::invalid_argument("class_weights must have one entry per class");
  }
  for (int y : targets) {
    if (y < 0 || y >= model.num_classes) throw std::invalid_argument("target id out of range for model");
  }
  const double loss_value = mean_loss(targets, class_weights);

  MatrixT<T> dlogits = probs_;
  for (int b = 0; b < B; ++b) {
    const int y = targets[static_cast<std::size_t>(b)];
    dlogits(y, b) -= T(1);
    dlogits.col(b) *= static_cast<T>(target_weight(class_weights, y) / B);
  }
  grads.output_weights.noalias() = dlogits * features_.transpose();
  grads.output_bias = dlogits.rowwise().sum();
  const MatrixT<T> dfeat = model.output_weights.transpose() * dlogits;

  const auto& top = hidden_.back();
  const auto Htop = top.front().rows();
  std::vector<MatrixT<T>> dh_ext(static_cast<std::size_t>(L));
  for (auto& m : dh_ext) m.setZero(Htop, B);

  if (model.attention) {
    const auto& a = *model.attention;
    auto& ga = *grads.attention;
    MatrixT<T> dw(L, B);
    for (int t = 0; t < L; ++t) {
      const auto& h = top[static_cast<std::size_t>(t)];
      dw.row(t) = (dfeat.array() * h.array()).colwise().sum().matrix();
      dh_ext[static_cast<std::size_t>(t)].array() = dfeat.array().rowwise() * attn_weights_.row(t).array();
    }
    const Eigen::Matrix<T, 1, Eigen::Dynamic> inner = (attn_weights_.array() * dw.array()).colwise().sum().matrix();
    const MatrixT<T> ds = (attn_weights_.array() * (dw.array().rowwise() - inner.array())).matrix();
    ga.projection.setZero();
    ga.score.setZero();
    MatrixT<T> dpre(a.attn_dim(), B);
    for (int t = 0; t < L; ++t) {
      const auto& e = attn_tanh_[static_cast<std::size_t>(t)];
      ga.score.noalias() += e * ds.row(t).transpose();
      dpre.noalias() = a.score * ds.row(t);
      dpre.array() *= (T(1) - e.array().square());
      ga.projection.noalias() += dpre * top[static_cast<std::size_t>(t)].transpose();
      dh_ext[static_cast<std::size_t>(t)].noalias() += a.projection.transpose() * dpre;
    }
  } else {
    dh_ext.back() = dfeat;
  }

  MatrixT<T> dz, dh, dc, dh_next, dc_next, tc;
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const auto& p = model.layers[li];
    auto& g = grads.layers[li];
    const auto H = p.hidden_dim();
    g.input_weights.setZero();
    g.recurrent_weights.setZero();
    g.bias.setZero();
    std::vector<MatrixT<T>> dx_below(li > 0 ? static_cast<std::size_t>(L) : 0);
    dh_next.setZero(H, B);
    dc_next.setZero(H, B);
    dz.resize(4 * H, B);
    for (int t = L - 1; t >= 0; --t) {
      const auto ts = static_cast<std::size_t>(t);
      const auto& z = gates_[li][ts];
      const auto i = z.topRows(H).array();
      const auto f = z.middleRows(H, H).array();
      const auto o = z.middleRows(2 * H, H).array();
      const auto gg = z.bottomRows(H).array();
      tc = cells_[li][ts].array().tanh().matrix();

      dh = dh_ext[ts] + dh_next;
      dz.middleRows(2 * H, H) = (dh.array() * tc.array() * o * (T(1) - o)).matrix();
      dc = dc_next;
      dc.array() += dh.array() * o * (T(1) - tc.array().square());
      dz.topRows(H) = (dc.array() * gg * i * (T(1) - i)).matrix();
      if (t > 0) {
        dz.middleRows(H, H) = (dc.array() * cells_[li][ts - 1].array() * f * (T(1) - f)).matrix();
      } else {
        dz.middleRows(H, H).setZero();
      }
      dz.bottomRows(H) = (dc.array() * i * (T(1) - gg.square())).matrix();
      dc_next = (dc.array() * f).matrix();

      g.bias.noalias() += dz.rowwise().sum();
      if (t > 0) {
        g.recurrent_weights.noalias() += dz * hidden_[li][ts - 1].transpose();
        dh_next.noalias() = p.recurrent_weights.transpose() * dz;
      } else {
        dh_next.setZero();
      }
      if (li == 0) {
        for (int b = 0; b < B; ++b) {
          g.input_weights.col(ids_[ts * static_cast<std::size_t>(B) + static_cast<std::size_t>(b)]) += dz.col(b);
        }
      } else {
        g.input_weights.noalias() += dz * hidden_[li - 1][ts].transpose();
        dx_below[ts].noalias() = p.input_weights.transpose() * dz;
      }
    }
    if (li > 0) dh_ext = std::move(dx_below);
  }
  return loss_value;
}

template class Workspace<float>;
template class Workspace<double>;

void gather_batch(const SequenceDataset& data, std::span<const std::size_t> indices, std::vector<int>& ids,
                  std::vector<int>& targets) {
  const auto L = static_cast<std::size_t>(data.seq_len());
  const auto B = indices.size();
  ids.resize(L * B);
  targets.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    const auto w = data[indices[b]];
    for (std::size_t t = 0; t < L; ++t) ids[t * B + b] = w.context[t];
    targets[b] = w.target;
  }
}

Eigen::VectorXd forward(const ModelParams& model, std::span<const int> window) {
  if (window.size() != static_cast<std::size_t>(model.seq_len)) {
    throw std::invalid_argument("window length does not match the model's sequence length");
  }
  Workspace<double> ws;
  ws.forward(model, window, 1);
  return ws.probs().col(0);
}

double loss(std::span<const double> probs, int target, double weight) {
  if (target < 0 || static_cast<std::size_t>(target) >= probs.size()) throw std::invalid_argument("target out of range");
  return -weight * std::log(std::max(probs[static_cast<std::size_t>(target)], 1e-12));
}

std::pair<double, ModelParams> gradients(const ModelParams& model, const SequenceDataset& data,
                                         std::span<const std::size_t> indices, std::span<const double> class_weights) {
  if (indices.empty()) throw std::invalid_argument("gradient batch must not be empty");
  if (data.seq_len() != model.seq_len) throw std::invalid_argument("dataset and model sequence lengths differ");
  std::vector<int> ids, targets;
  gather_batch(data, indices, ids, targets);
  Workspace<double> ws;
  ws.forward(model, ids, static_cast<int>(indices.size()));
  ModelParams grads = model.zeros_like();
  const double l = ws.backward(model, targets, class_weights, grads);
  return {l, std::move(grads)};
}

namespace {

template <typename T>
Prediction predict_impl(const Model<T>& model, const SequenceDataset& windows, std::size_t batch_size) {
  Prediction out;
  out.num_classes = model.num_classes;
  out.classes.resize(windows.size());
  out.probs.resize(windows.size() * static_cast<std::size_t>(model.num_classes));
  Workspace<T> ws;
  std::vector<std::size_t> idx;
  std::vector<int> ids, targets;
  for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
    const auto end = std::min(windows.size(), begin + batch_size);
    idx.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) idx[i - begin] = i;
    gather_batch(windows, idx, ids, targets);
    ws.forward(model, ids, static_cast<int>(idx.size()));
    const auto& p = ws.probs();
    for (std::size_t i = begin; i < end; ++i) {
      const auto b = static_cast<Eigen::Index>(i - begin);
      Eigen::Index arg = 0;
      p.col(b).maxCoeff(&arg);
      out.classes[i] = static_cast<int>(arg);
      for (int c = 0; c < model.num_classes; ++c) {
        out.probs[i * static_cast<std::size_t>(model.num_classes) + static_cast<std::size_t>(c)] =
            static_cast<double>(p(c, b));
      }
    }
  }
  return out;
}

}  // namespace

Prediction predict(const ModelParams& model, const SequenceDataset& windows, std::size_t batch_size,
                   Precision precision) {
  model.validate();
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!windows.empty() && windows.seq_len() != model.seq_len) {
    throw std::invalid_argument("dataset and model sequence lengths differ");
  }
  if (precision == Precision::f32) return predict_impl(model.cast<float>(), windows, batch_size);
  return predict_impl(model, windows, batch_size);
}

}  // namespace logsentinel
