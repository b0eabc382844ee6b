#include "logsentinel/introspect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace logsentinel {

ActivationMatrix hidden_activations(const ModelParams& model, const SequenceDataset& windows) {
  model.validate();
  if (!windows.empty() && windows.seq_len() != model.seq_len) {
    throw std::invalid_argument("dataset and model sequence lengths differ");
  }
  ActivationMatrix out(static_cast<Eigen::Index>(windows.size()), model.feature_dim());
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
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) = ws.features().transpose();
  }
  return out;
}

UnitClusterReport cluster_by_argmax(const ActivationMatrix& activations, std::span<const std::string> messages,
                                    ArgmaxMode mode) {
  if (static_cast<std::size_t>(activations.rows()) != messages.size()) {
    throw std::invalid_argument("one message per activation row required");
  }
  UnitClusterReport report;
  report.units = static_cast<std::size_t>(activations.cols());
  report.windows = messages.size();
  for (Eigen::Index r = 0; r < activations.rows(); ++r) {
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (Eigen::Index u = 0; u < activations.cols(); ++u) {
      const double v = mode == ArgmaxMode::absolute ? std::abs(activations(r, u)) : activations(r, u);
      if (v > best_v) {
        best_v = v;
        best = static_cast<int>(u);
      }
    }
    report.groups[best].push_back(UnitMember{static_cast<std::size_t>(r), messages[static_cast<std::size_t>(r)]});
  }
  return report;
}

double purity(const UnitClusterReport& report, std::span<const int> labels) {
  std::size_t majority_total = 0;
  std::size_t n = 0;
  for (const auto& [unit, members] : report.groups) {
    std::unordered_map<int, std::size_t> hist;
    std::size_t best = 0;
    for (const auto& m : members) {
      if (m.window >= labels.size()) throw std::invalid_argument("labels do not cover every window");
      best = std::max(best, ++hist[labels[m.window]]);
    }
    majority_total += best;
    n += members.size();
  }
  return n == 0 ? 0.0 : static_cast<double>(majority_total) / static_cast<double>(n);
}

}  // namespace logsentinel
