#include "logsentinel/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

#include "logsentinel/error.hpp"

namespace logsentinel {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const auto item = trim(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const auto v = trim(text);
  T out{};
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (v.empty() || res.ec != std::errc() || res.ptr != end)
    throw Error("config: invalid value for " + std::string(key) + ": '" + v + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const auto v = trim(text);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error("config: invalid boolean for " + std::string(key) + ": '" + v + "'");
}

std::vector<int> parse_int_list(std::string_view key, std::string_view text) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<int>(key, item));
  return out;
}

using Setter = void (*)(PipelineConfig&, std::string_view, std::string_view);

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"schema", [](PipelineConfig& c, std::string_view, std::string_view v) { c.schema = trim(v); }},
      {"format", [](PipelineConfig& c, std::string_view, std::string_view v) { c.format = trim(v); }},
      {"bucket_width",
       [](PipelineConfig& c, std::string_view k, std::string_view v) { c.bucket_width = parse_number<std::int64_t>(k, v); }},
      {"priority_lt", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.priority_lt = parse_number<int>(k, v); }},
      {"sanitize_window",
       [](PipelineConfig& c, std::string_view k, std::string_view v) {
         c.sanitize_window = parse_number<std::int64_t>(k, v);
       }},
      {"sequence_priority_filter",
       [](PipelineConfig& c, std::string_view k, std::string_view v) { c.sequence_priority_filter = parse_bool(k, v); }},
      {"user_keywords", [](PipelineConfig& c, std::string_view, std::string_view v) { c.user_keywords = split_list(v); }},
      {"max_length", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.max_length = parse_number<int>(k, v); }},
      {"min_frequency",
       [](PipelineConfig& c, std::string_view k, std::string_view v) { c.min_frequency = parse_number<double>(k, v); }},
      {"k", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.k = parse_number<int>(k, v); }},
      {"k_range", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.k_range = parse_int_list(k, v); }},
      {"max_iter", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.max_iter = parse_number<int>(k, v); }},
      {"n_init", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.n_init = parse_number<int>(k, v); }},
      {"binarize", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.binarize = parse_bool(k, v); }},
      {"variance_floor",
       [](PipelineConfig& c, std::string_view k, std::string_view v) { c.variance_floor = parse_number<double>(k, v); }},
      {"seq_len", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.seq_len = parse_number<int>(k, v); }},
      {"group_by", [](PipelineConfig& c, std::string_view, std::string_view v) { c.group_by = trim(v); }},
      {"hidden", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.hidden = parse_int_list(k, v); }},
      {"attention", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.attention = parse_bool(k, v); }},
      {"attn_dim", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.attn_dim = parse_number<int>(k, v); }},
      {"epochs", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.epochs = parse_number<int>(k, v); }},
      {"batch_size", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.batch_size = parse_number<int>(k, v); }},
      {"early_stop_delta",
       [](PipelineConfig& c, std::string_view k, std::string_view v) { c.early_stop_delta = parse_number<double>(k, v); }},
      {"val_frac", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.val_frac = parse_number<double>(k, v); }},
      {"learning_rate",
       [](PipelineConfig& c, std::string_view k, std::string_view v) { c.learning_rate = parse_number<double>(k, v); }},
      {"class_weights", [](PipelineConfig& c, std::string_view, std::string_view v) { c.class_weights = trim(v); }},
      {"precision", [](PipelineConfig& c, std::string_view, std::string_view v) { c.precision = trim(v); }},
      {"scenario", [](PipelineConfig& c, std::string_view, std::string_view v) { c.scenario = trim(v); }},
      {"synth_messages",
       [](PipelineConfig& c, std::string_view k, std::string_view v) { c.synth_messages = parse_number<std::size_t>(k, v); }},
      {"synth_noise", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.synth_noise = parse_number<double>(k, v); }},
      {"seed", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.seed = parse_number<std::uint64_t>(k, v); }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& PipelineConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : setters()) out.push_back(name);
    return out;
  }();
  return k;
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw Error("config: unknown key '" + std::string(key) + "'");
  it->second(*this, key, value);
}

PipelineConfig PipelineConfig::parse(std::string_view text) {
  PipelineConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    c.set(trim(std::string_view(body).substr(0, eq)), std::string_view(body).substr(eq + 1));
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error("config: " + m); };
  (void)resolved_schema();
  (void)input_format();
  if (bucket_width <= 0) fail("bucket_width must be positive");
  if (priority_lt < 1 || priority_lt > 6) fail("priority_lt must be in [1, 6]");
  if (sanitize_window < 0) fail("sanitize_window must be non-negative");
  if (max_length < 1) fail("max_length must be positive");
  if (!(min_frequency >= 0.0 && min_frequency < 1.0)) fail("min_frequency must be in [0, 1)");
  if (k < 1) fail("k must be positive");
  for (int v : k_range)
    if (v < 1) fail("k_range entries must be positive");
  if (max_iter < 1) fail("max_iter must be positive");
  if (n_init < 1) fail("n_init must be positive");
  if (!(variance_floor > 0.0)) fail("variance_floor must be positive");
  if (seq_len < 1) fail("seq_len must be positive");
  if (group_by != "none" && group_by != "ip") fail("group_by must be none or ip");
  if (hidden.empty()) fail("hidden needs at least one layer");
  for (int h : hidden)
    if (h < 1) fail("hidden sizes must be positive");
  if (attn_dim < 1) fail("attn_dim must be positive");
  if (class_weights != "none" && class_weights != "auto") {
    for (const auto& w : split_list(class_weights))
      if (!(parse_number<double>("class_weights", w) > 0.0)) fail("class weights must be positive");
  }
  if (precision != "f32" && precision != "f64") fail("precision must be f32 or f64");
  if (!(synth_noise >= 0.0 && synth_noise < 1.0)) fail("synth_noise must be in [0, 1)");
  if (synth_messages == 0) fail("synth_messages must be positive");
  train_config().validate();
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"schema", schema},
          {"format", format},
          {"bucket_width", bucket_width},
          {"priority_lt", priority_lt},
          {"sanitize_window", sanitize_window},
          {"sequence_priority_filter", sequence_priority_filter},
          {"user_keywords", user_keywords},
          {"max_length", max_length},
          {"min_frequency", min_frequency},
          {"k", k},
          {"k_range", k_range},
          {"max_iter", max_iter},
          {"n_init", n_init},
          {"binarize", binarize},
          {"variance_floor", variance_floor},
          {"seq_len", seq_len},
          {"group_by", group_by},
          {"hidden", hidden},
          {"attention", attention},
          {"attn_dim", attn_dim},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"early_stop_delta", early_stop_delta},
          {"val_frac", val_frac},
          {"learning_rate", learning_rate},
          {"class_weights", class_weights},
          {"precision", precision},
          {"scenario", scenario},
          {"synth_messages", synth_messages},
          {"synth_noise", synth_noise},
          {"seed", seed}};
}

Schema PipelineConfig::resolved_schema() const {
  try {
    return Schema::parse(schema);
  } catch (const std::invalid_argument& e) {
    throw Error(std::string("config: ") + e.what());
  }
}

InputFormat PipelineConfig::input_format() const {
  if (format == "auto") return InputFormat::automatic;
  if (format == "jsonl") return InputFormat::json_lines;
  if (format == "csv") return InputFormat::csv;
  throw Error("config: format must be auto, jsonl or csv");
}

NormalizerOptions PipelineConfig::normalizer() const {
  NormalizerOptions o;
  o.user_keywords = user_keywords;
  o.max_length = static_cast<std::size_t>(max_length);
  return o;
}

KMeansOptions PipelineConfig::kmeans() const { return {max_iter, n_init}; }

Architecture PipelineConfig::architecture(int num_classes) const {
  Architecture a;
  a.num_classes = num_classes;
  a.seq_len = seq_len;
  a.hidden = hidden;
  a.attention = attention;
  a.attn_dim = attn_dim;
  return a;
}

TrainConfig PipelineConfig::train_config() const {
  TrainConfig t;
  t.max_epochs = epochs;
  t.batch_size = batch_size;
  t.early_stop_delta = early_stop_delta;
  t.val_frac = val_frac;
  t.learning_rate = learning_rate;
  t.seed = seed;
  t.precision = precision == "f64" ? Precision::f64 : Precision::f32;
  return t;
}

PreparedSequences prepare_sequences(RecordBatch raw, const PipelineConfig& config) {
  PreparedSequences out;
  RecordBatch batch = config.sequence_priority_filter ? filter_priority(std::move(raw), config.priority_lt) : std::move(raw);
  if (batch.records.empty()) throw Error("no records left after priority filtering");
  out.batch = sanitize_timestamps(std::move(batch), config.sanitize_window);

  const auto opts = config.normalizer();
  out.normalized.reserve(out.batch.records.size());
  for (const auto& r : out.batch.records) out.normalized.push_back(normalize_message(r.message, opts));
  out.templates = collapse_rare(mine_templates(out.normalized), config.min_frequency);
  out.ids.reserve(out.normalized.size());
  for (const auto& text : out.normalized) out.ids.push_back(*out.templates.id_of(text));

  const int classes = static_cast<int>(out.templates.size());
  if (config.group_by == "ip") {
    std::map<std::string, std::size_t> slot;
    std::vector<std::vector<int>> streams;
    std::vector<std::vector<std::size_t>> origins;
    for (std::size_t i = 0; i < out.ids.size(); ++i) {
      const auto [it, fresh] = slot.try_emplace(out.batch.records[i].ip, streams.size());
      if (fresh) {
        streams.emplace_back();
        origins.emplace_back();
      }
      streams[it->second].push_back(out.ids[i]);
      origins[it->second].push_back(i);
    }
    out.dataset = make_windows_grouped(streams, origins, config.seq_len, classes);
    if (out.dataset.empty()) throw Error("insufficient history: no per-ip stream longer than seq_len");
  } else {
    out.dataset = make_windows(out.ids, config.seq_len, classes);
    std::vector<std::size_t> origins(out.ids.size());
    for (std::size_t i = 0; i < origins.size(); ++i) origins[i] = i;
    out.dataset.set_origins(std::move(origins));
  }
  return out;
}

PreparedClusters cluster_records(RecordBatch raw, const PipelineConfig& config) {
  PreparedClusters out;
  RecordBatch batch = filter_priority(std::move(raw), config.priority_lt);
  if (batch.records.empty()) throw Error("no records left after priority filtering");
  out.batch = sanitize_timestamps(std::move(batch), config.sanitize_window);
  out.buckets = bucketize(out.batch, config.bucket_width);

  const auto opts = config.normalizer();
  out.normalized.reserve(out.batch.records.size());
  for (const auto& r : out.batch.records) out.normalized.push_back(normalize_message(r.message, opts));
  out.vocab = build_vocab(out.normalized);
  out.bow = bow_encode(out.normalized, out.vocab);

  const auto points = points_from_bow(out.bow, config.binarize);
  if (config.k_range.empty()) {
    out.model = kmeans_fit(points, config.k, config.seed, config.kmeans());
  } else {
    out.bic = select_k(points, config.k_range, config.seed, config.kmeans(), config.variance_floor);
    out.model = kmeans_fit(points, out.bic->selected_k, config.seed + static_cast<std::uint64_t>(out.bic->selected_k),
                           config.kmeans());
  }
  return out;
}

nlohmann::json cluster_summary(const PreparedClusters& c) {
  std::vector<std::map<std::string, std::size_t>> members(static_cast<std::size_t>(c.model.k));
  for (std::size_t i = 0; i < c.model.assignments.size(); ++i)
    ++members[static_cast<std::size_t>(c.model.assignments[i])][c.normalized[i]];

  nlohmann::json clusters = nlohmann::json::array();
  for (int k = 0; k < c.model.k; ++k) {
    std::vector<std::pair<std::string, std::size_t>> texts(members[static_cast<std::size_t>(k)].begin(),
                                                           members[static_cast<std::size_t>(k)].end());
    std::stable_sort(texts.begin(), texts.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    nlohmann::json m = nlohmann::json::array();
    std::size_t size = 0;
    for (const auto& [text, count] : texts) {
      m.push_back({{"text", text}, {"count", count}});
      size += count;
    }
    clusters.push_back({{"cluster", k}, {"size", size}, {"members", m}});
  }

  const auto occ = occupancy(c.model);
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : occ.entries)
    hist.push_back({{"cluster", e.cluster}, {"members", e.members}, {"fraction", e.fraction}, {"super_cluster", e.super_cluster}});

  nlohmann::json out = {{"k", c.model.k},
                        {"rows", c.model.assignments.size()},
                        {"vocabulary", c.vocab.size()},
                        {"buckets", c.buckets.size()},
                        {"inertia", c.model.inertia},
                        {"iterations", c.model.iterations},
                        {"clusters", clusters},
                        {"occupancy", {{"entries", hist}, {"has_super_cluster", occ.has_super_cluster}}}};
  if (c.bic) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& [k, s] : c.bic->scores) scores.push_back({{"k", k}, {"bic", s}});
    out["bic"] = {{"scores", scores}, {"selected_k", c.bic->selected_k}};
  }
  return out;
}

std::vector<double> resolve_class_weights(const std::string& spec, const SequenceDataset& dataset) {
  if (spec == "none") return {};
  if (spec == "auto") {
    auto counts = dataset.target_counts();
    // Unseen classes get the largest weight.
    std::size_t min_seen = 0;
    for (auto c : counts)
      if (c > 0 && (min_seen == 0 || c < min_seen)) min_seen = c;
    for (auto& c : counts)
      if (c == 0) c = std::max<std::size_t>(min_seen, 1);
    return compute_class_weights(counts);
  }
  std::vector<double> w;
  for (const auto& item : split_list(spec)) w.push_back(parse_number<double>("class_weights", item));
  if (static_cast<int>(w.size()) != dataset.num_classes())
    throw Error("class_weights lists " + std::to_string(w.size()) + " weights for " +
                std::to_string(dataset.num_classes()) + " classes");
  return w;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.close();
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error("failed writing " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace logsentinel
