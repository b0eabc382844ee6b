#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "logsentinel/seqmodel.hpp"

namespace logsentinel {

/// Windows x feature_dim: the exact vector the dense head consumes (final
/// hidden state of the last layer, or the attention context when the model
/// has an attention head).
using ActivationMatrix = Eigen::MatrixXd;

ActivationMatrix hidden_activations(const ModelParams& model, const SequenceDataset& windows);

struct UnitMember {
  std::size_t window = 0;
  std::string message;
};

struct UnitClusterReport {
  std::map<int, std::vector<UnitMember>> groups;
  std::size_t units = 0;
  std::size_t windows = 0;

  /// Fraction of units with a non-empty group.
  double coverage() const { return units == 0 ? 0.0 : static_cast<double>(groups.size()) / static_cast<double>(units); }
};

enum class ArgmaxMode { absolute, signed_value };

/// Assigns every row to its most excited unit (ties -> lowest unit id).
UnitClusterReport cluster_by_argmax(const ActivationMatrix& activations, std::span<const std::string> messages,
                                    ArgmaxMode mode = ArgmaxMode::absolute);

/// Sum over groups of the majority-label count, divided by the window count.
double purity(const UnitClusterReport& report, std::span<const int> labels);

}  // namespace logsentinel
