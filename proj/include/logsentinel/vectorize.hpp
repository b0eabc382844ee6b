#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace logsentinel {

/// One dimension per distinct whitespace-separated word, first-seen order.
class Vocabulary {
 public:
  int add(std::string_view word);
  std::optional<int> find(std::string_view word) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

/// Sparse (CSR) message x vocabulary count matrix.
struct BowMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<int> col_idx;
  std::vector<std::uint32_t> counts;
  std::size_t skipped_words = 0;  // out-of-vocabulary tokens seen while encoding

  std::uint32_t at(std::size_t row, std::size_t col) const;
  std::vector<std::uint32_t> dense_row(std::size_t row) const;
};

Vocabulary build_vocab(std::span<const std::string> messages);
BowMatrix bow_encode(std::span<const std::string> messages, const Vocabulary& vocab);

std::vector<double> one_hot(int id, int num_classes);

/// A context of L template ids and the id that followed it.
struct Window {
  std::span<const int> context;
  int target = 0;
};

/// Sliding windows over one or more time-ordered template-id streams. Only
/// the ids and window offsets are stored; one-hot expansion happens per batch.
class SequenceDataset {
 public:
  SequenceDataset() = default;

  std::size_t size() const { return starts_.size(); }
  bool empty() const { return starts_.empty(); }
  int seq_len() const { return seq_len_; }
  int num_classes() const { return num_classes_; }

  Window operator[](std::size_t i) const;
  /// Stream offset of window i's first context element.
  std::size_t start(std::size_t i) const { return starts_[i]; }
  /// Stream offset of window i's target.
  std::size_t target_offset(std::size_t i) const { return starts_[i] + static_cast<std::size_t>(seq_len_); }

  const std::vector<int>& stream() const { return *stream_; }
  /// Per stream element: index of the source record it came from (may be empty).
  const std::vector<std::size_t>& origins() const { return *origins_; }

  /// Windows [begin, end) sharing this dataset's stream.
  SequenceDataset slice(std::size_t begin, std::size_t end) const;

  /// Per-class target counts.
  std::vector<std::size_t> target_counts() const;

  nlohmann::json to_json() const;
  static SequenceDataset from_json(const nlohmann::json& j);

  friend SequenceDataset make_windows(std::span<const int>, int, int);
  friend SequenceDataset make_windows_grouped(std::span<const std::vector<int>>, std::span<const std::vector<std::size_t>>,
                                              int, int);
  friend SequenceDataset dataset_from_windows(std::span<const std::vector<int>>, std::span<const int>, int);

  /// Attaches source-record indices (one per stream element).
  void set_origins(std::vector<std::size_t> origins);

 private:
  int seq_len_ = 0;
  int num_classes_ = 0;
  std::shared_ptr<const std::vector<int>> stream_ = std::make_shared<const std::vector<int>>();
  std::shared_ptr<const std::vector<std::size_t>> origins_ = std::make_shared<const std::vector<std::size_t>>();
  std::vector<std::size_t> segments_;  // segment boundaries into stream_ (begin offsets plus final end)
  std::vector<std::size_t> starts_;
};

/// (len(stream) - L) windows; window k = (stream[k..k+L), stream[k+L]).
/// num_classes <= 0 means max id + 1.
SequenceDataset make_windows(std::span<const int> stream, int seq_len = 15, int num_classes = 0);

/// Windows built independently per stream (e.g. one stream per router) and
/// concatenated; streams of length <= L contribute nothing. Origins are
/// optional (empty span).
SequenceDataset make_windows_grouped(std::span<const std::vector<int>> streams,
                                     std::span<const std::vector<std::size_t>> origins, int seq_len,
                                     int num_classes);

/// Dataset from explicit (context, target) pairs, each context of equal length.
SequenceDataset dataset_from_windows(std::span<const std::vector<int>> contexts, std::span<const int> targets,
                                     int num_classes);

/// weight_c = max(counts) / counts_c; every count must be positive.
std::vector<double> compute_class_weights(std::span<const std::size_t> counts);

/// Chronological split: the last ceil(val_frac * n) windows are validation.
std::pair<SequenceDataset, SequenceDataset> split(const SequenceDataset& dataset, double val_frac = 0.2);

}  // namespace logsentinel
