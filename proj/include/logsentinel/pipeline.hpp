#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "logsentinel/cluster.hpp"
#include "logsentinel/ingest.hpp"
#include "logsentinel/normalize.hpp"
#include "logsentinel/seqmodel.hpp"
#include "logsentinel/vectorize.hpp"

namespace logsentinel {

/// Every tunable of the pipeline. Loaded from `key = value` lines (`#`
/// comments allowed); unknown keys and malformed values throw Error.
struct PipelineConfig {
  // ingest
  std::string schema = "default";
  std::string format = "auto";  // auto | jsonl | csv
  std::int64_t bucket_width = 300;
  int priority_lt = 5;
  std::int64_t sanitize_window = 86400;
  bool sequence_priority_filter = true;  // apply priority_lt before building windows too

  // normalize
  std::vector<std::string> user_keywords{"user"};
  int max_length = 50;
  double min_frequency = 0.01;

  // cluster
  int k = 30;
  std::vector<int> k_range;  // non-empty: choose k by BIC
  int max_iter = 100;
  int n_init = 30;
  bool binarize = false;
  double variance_floor = 1e-6;

  // sequences and model
  int seq_len = 15;
  std::string group_by = "none";  // none | ip
  std::vector<int> hidden{256, 192};
  bool attention = true;
  int attn_dim = 64;

  // training
  int epochs = 20;
  int batch_size = 128;
  double early_stop_delta = 1e-5;
  double val_frac = 0.2;
  double learning_rate = 1e-3;
  std::string class_weights = "none";  // none | auto | comma-separated list
  std::string precision = "f32";

  // synth
  std::string scenario = "cascade-basic";  // or a JSON file
  std::size_t synth_messages = 50000;
  double synth_noise = 0.1;

  std::uint64_t seed = 0;

  /// Sets one key from its textual value.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  nlohmann::json to_json() const;

  static PipelineConfig load(const std::filesystem::path& path);
  static PipelineConfig parse(std::string_view text);
  static const std::vector<std::string>& keys();

  Schema resolved_schema() const;
  InputFormat input_format() const;
  NormalizerOptions normalizer() const;
  KMeansOptions kmeans() const;
  Architecture architecture(int num_classes) const;
  TrainConfig train_config() const;
};

/// Records after priority filtering and timestamp sanitizing, their
/// normalized texts, the collapsed template table, and windows whose
/// origins index `batch.records`.
struct PreparedSequences {
  RecordBatch batch;
  std::vector<std::string> normalized;
  TemplateTable templates;
  std::vector<int> ids;
  SequenceDataset dataset;
};

PreparedSequences prepare_sequences(RecordBatch raw, const PipelineConfig& config);

struct PreparedClusters {
  RecordBatch batch;
  std::vector<TimeBucket> buckets;
  std::vector<std::string> normalized;
  Vocabulary vocab;
  BowMatrix bow;
  ClusterModel model;
  std::optional<BicReport> bic;
};

/// Filter, sanitize, bucketize, normalize, bag-of-words and K-Means.
PreparedClusters cluster_records(RecordBatch raw, const PipelineConfig& config);

/// Cluster JSON: per-cluster member texts with counts, occupancy and BIC table.
nlohmann::json cluster_summary(const PreparedClusters& clusters);

/// Class weights named by config.class_weights for a dataset's targets.
std::vector<double> resolve_class_weights(const std::string& spec, const SequenceDataset& dataset);

/// Writes `data` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

}  // namespace logsentinel
