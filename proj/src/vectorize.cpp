#include "logsentinel/vectorize.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace logsentinel {

namespace {

template <typename F>
void for_each_word(std::string_view text, F&& f) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t') ++j;
    if (j > i) f(text.substr(i, j - i));
    i = j;
  }
}

}  // namespace

int Vocabulary::add(std::string_view word) {
  auto [it, inserted] = index_.try_emplace(std::string(word), static_cast<int>(words_.size()));
  if (inserted) words_.emplace_back(word);
  return it->second;
}

std::optional<int> Vocabulary::find(std::string_view word) const {
  if (auto it = index_.find(std::string(word)); it != index_.end()) return it->second;
  return std::nullopt;
}

nlohmann::json Vocabulary::to_json() const {
  return nlohmann::json{{"format", "logsentinel.vocabulary"}, {"version", 1}, {"words", words_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "logsentinel.vocabulary") throw std::invalid_argument("not a vocabulary document");
  Vocabulary v;
  for (const auto& w : j.at("words")) v.add(w.get<std::string>());
  return v;
}

std::uint32_t BowMatrix::at(std::size_t row, std::size_t col) const {
  for (auto k = row_ptr[row]; k < row_ptr[row + 1]; ++k) {
    if (static_cast<std::size_t>(col_idx[k]) == col) return counts[k];
  }
  return 0;
}

std::vector<std::uint32_t> BowMatrix::dense_row(std::size_t row) const {
  std::vector<std::uint32_t> out(cols, 0);
  for (auto k = row_ptr[row]; k < row_ptr[row + 1]; ++k) out[static_cast<std::size_t>(col_idx[k])] = counts[k];
  return out;
}

Vocabulary build_vocab(std::span<const std::string> messages) {
  Vocabulary v;
  for (const auto& m : messages) for_each_word(m, [&](std::string_view w) { v.add(w); });
  return v;
}

BowMatrix bow_encode(std::span<const std::string> messages, const Vocabulary& vocab) {
  BowMatrix m;
  m.rows = messages.size();
  m.cols = vocab.size();
  m.row_ptr.reserve(messages.size() + 1);
  std::map<int, std::uint32_t> row;
  for (const auto& msg : messages) {
    row.clear();
    for_each_word(msg, [&](std::string_view w) {
      if (auto id = vocab.find(w)) ++row[*id];
      else ++m.skipped_words;
    });
    for (const auto& [col, count] : row) {
      m.col_idx.push_back(col);
      m.counts.push_back(count);
    }
    m.row_ptr.push_back(m.col_idx.size());
  }
  return m;
}

std::vector<double> one_hot(int id, int num_classes) {
  if (num_classes <= 0) throw std::invalid_argument("num_classes must be positive");
  if (id < 0 || id >= num_classes) throw std::invalid_argument("class id out of range for one-hot encoding");
  std::vector<double> v(static_cast<std::size_t>(num_classes), 0.0);
  v[static_cast<std::size_t>(id)] = 1.0;
  return v;
}

Window SequenceDataset::operator[](std::size_t i) const {
  const auto s = starts_.at(i);
  const auto& st = *stream_;
  return Window{std::span<const int>(st.data() + s, static_cast<std::size_t>(seq_len_)),
                st[s + static_cast<std::size_t>(seq_len_)]};
}

SequenceDataset SequenceDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > starts_.size()) throw std::out_of_range("dataset slice out of range");
  SequenceDataset out = *this;
  out.starts_.assign(starts_.begin() + static_cast<std::ptrdiff_t>(begin),
                     starts_.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

std::vector<std::size_t> SequenceDataset::target_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
  for (std::size_t i = 0; i < size(); ++i) ++counts[static_cast<std::size_t>((*this)[i].target)];
  return counts;
}

void SequenceDataset::set_origins(std::vector<std::size_t> origins) {
  if (!origins.empty() && origins.size() != stream_->size()) {
    throw std::invalid_argument("origins must have one entry per stream element");
  }
  origins_ = std::make_shared<const std::vector<std::size_t>>(std::move(origins));
}

nlohmann::json SequenceDataset::to_json() const {
  nlohmann::json j{{"format", "logsentinel.dataset"},
                   {"version", 1},
                   {"seq_len", seq_len_},
                   {"num_classes", num_classes_},
                   {"stream", *stream_},
                   {"segments", segments_},
                   {"window_starts", starts_}};
  if (!origins_->empty()) j["origins"] = *origins_;
  return j;
}

SequenceDataset SequenceDataset::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "logsentinel.dataset") throw std::invalid_argument("not a dataset document");
  if (j.value("version", 0) != 1) throw std::invalid_argument("unsupported dataset version");
  SequenceDataset d;
  d.seq_len_ = j.at("seq_len").get<int>();
  d.num_classes_ = j.at("num_classes").get<int>();
  d.stream_ = std::make_shared<const std::vector<int>>(j.at("stream").get<std::vector<int>>());
  d.segments_ = j.at("segments").get<std::vector<std::size_t>>();
  d.starts_ = j.at("window_starts").get<std::vector<std::size_t>>();
  for (int id : *d.stream_) {
    if (id < 0 || id >= d.num_classes_) throw std::invalid_argument("dataset id out of range");
  }
  for (auto s : d.starts_) {
    if (s + static_cast<std::size_t>(d.seq_len_) >= d.stream_->size()) throw std::invalid_argument("window start out of range");
  }
  if (j.contains("origins")) d.set_origins(j["origins"].get<std::vector<std::size_t>>());
  return d;
}

SequenceDataset make_windows(std::span<const int> stream, int seq_len, int num_classes) {
  std::vector<std::vector<int>> one{std::vector<int>(stream.begin(), stream.end())};
  if (seq_len <= 0) throw std::invalid_argument("sequence length must be positive");
  if (stream.size() <= static_cast<std::size_t>(seq_len)) throw std::invalid_argument("insufficient history");
  return make_windows_grouped(one, {}, seq_len, num_classes);
}

SequenceDataset make_windows_grouped(std::span<const std::vector<int>> streams,
                                     std::span<const std::vector<std::size_t>> origins, int seq_len,
                                     int num_classes) {
  if (seq_len <= 0) throw std::invalid_argument("sequence length must be positive");
  if (!origins.empty() && origins.size() != streams.size()) throw std::invalid_argument("origins/streams size mismatch");
  int max_id = -1;
  std::vector<int> flat;
  std::vector<std::size_t> flat_origins;
  SequenceDataset d;
  d.seq_len_ = seq_len;
  const auto L = static_cast<std::size_t>(seq_len);
  for (std::size_t g = 0; g < streams.size(); ++g) {
    const auto& s = streams[g];
    for (int id : s) {
      if (id < 0) throw std::invalid_argument("template ids must be non-negative");
      max_id = std::max(max_id, id);
    }
    const auto base = flat.size();
    d.segments_.push_back(base);
    flat.insert(flat.end(), s.begin(), s.end());
    if (!origins.empty()) {
      if (origins[g].size() != s.size()) throw std::invalid_argument("origins must match stream length");
      flat_origins.insert(flat_origins.end(), origins[g].begin(), origins[g].end());
    }
    for (std::size_t k = 0; k + L < s.size(); ++k) d.starts_.push_back(base + k);
  }
  d.segments_.push_back(flat.size());
  if (num_classes <= 0) num_classes = max_id + 1;
  if (max_id >= num_classes) throw std::invalid_argument("template id exceeds num_classes");
  d.num_classes_ = num_classes;
  d.stream_ = std::make_shared<const std::vector<int>>(std::move(flat));
  d.set_origins(std::move(flat_origins));
  return d;
}

SequenceDataset dataset_from_windows(std::span<const std::vector<int>> contexts, std::span<const int> targets,
                                     int num_classes) {
  if (contexts.size() != targets.size()) throw std::invalid_argument("contexts/targets size mismatch");
  if (contexts.empty()) throw std::invalid_argument("no windows");
  const auto L = contexts.front().size();
  if (L == 0) throw std::invalid_argument("empty context");
  std::vector<std::vector<int>> streams;
  streams.reserve(contexts.size());
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (contexts[i].size() != L) throw std::invalid_argument("all windows must have the same length");
    auto s = contexts[i];
    s.push_back(targets[i]);
    streams.push_back(std::move(s));
  }
  return make_windows_grouped(streams, {}, static_cast<int>(L), num_classes);
}

std::vector<double> compute_class_weights(std::span<const std::size_t> counts) {
  if (counts.empty()) return {};
  const auto max = *std::max_element(counts.begin(), counts.end());
  std::vector<double> w;
  w.reserve(counts.size());
  for (auto c : counts) {
    if (c == 0) throw std::invalid_argument("class with zero count; collapse rare classes first");
    w.push_back(static_cast<double>(max) / static_cast<double>(c));
  }
  return w;
}

std::pair<SequenceDataset, SequenceDataset> split(const SequenceDataset& dataset, double val_frac) {
  if (!(val_frac > 0.0 && val_frac < 1.0)) throw std::invalid_argument("val_frac must be in (0, 1)");
  const auto n = dataset.size();
  auto n_val = static_cast<std::size_t>(std::ceil(val_frac * static_cast<double>(n) - 1e-9));
  n_val = std::min(n_val, n);
  return {dataset.slice(0, n - n_val), dataset.slice(n - n_val, n)};
}

}  // namespace logsentinel
