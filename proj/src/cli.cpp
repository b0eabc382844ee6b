#include "logsentinel/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "logsentinel/attention.hpp"
#include "logsentinel/error.hpp"
#include "logsentinel/introspect.hpp"
#include "logsentinel/pipeline.hpp"
#include "logsentinel/synth.hpp"

namespace logsentinel {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : Error {
  using Error::Error;
};

struct Flag {
  const char* name;
  const char* key;
  const char* help;
};

constexpr Flag kFlags[] = {
    {"--seed", "seed", "random seed"},
    {"--schema", "schema", "schema preset, JSON file or field=source pairs"},
    {"--bucket-width", "bucket_width", "bucket width in seconds"},
    {"--priority-lt", "priority_lt", "keep records with priority below this"},
    {"--seq-len", "seq_len", "context length L"},
    {"--k", "k", "cluster count"},
    {"--epochs", "epochs", "maximum training epochs"},
    {"--batch-size", "batch_size", "mini-batch size"},
    {"--class-weights", "class_weights", "none, auto or a comma-separated list"},
    {"--min-frequency", "min_frequency", "templates at or below this share become OTHER"},
};

struct Options {
  std::string config_path;
  std::map<std::string, std::string> flags;
  std::vector<std::string> sets;
  std::string out = ".";
  std::string input;
  std::string model;
  std::string truth;
  std::string from;
  std::string k_range;
  std::string scale = "row";
  std::string scenario;
  std::string messages;
  std::string noise;
  std::string out_prefix;
  std::size_t rows = 0;
  std::size_t cap = 20;
  bool signed_max = false;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_json(const fs::path& path) {
  auto j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw Error("not valid JSON: " + path.string());
  return j;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

PipelineConfig resolve_config(const Options& o) {
  try {
    PipelineConfig c = o.config_path.empty() ? PipelineConfig{} : PipelineConfig::load(o.config_path);
    for (const auto& [key, value] : o.flags)
      if (!value.empty()) c.set(key, value);
    if (!o.k_range.empty()) c.set("k_range", o.k_range);
    if (!o.scenario.empty()) c.set("scenario", o.scenario);
    if (!o.messages.empty()) c.set("synth_messages", o.messages);
    if (!o.noise.empty()) c.set("synth_noise", o.noise);
    for (const auto& kv : o.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    c.validate();
    return c;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

void apply_thread_limit() {
  const char* env = std::getenv("LOGSENTINEL_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError("LOGSENTINEL_THREADS must be a positive integer");
  Eigen::setNbThreads(static_cast<int>(n));
#ifdef _OPENMP
  omp_set_num_threads(static_cast<int>(n));
#endif
}

struct LoadedDataset {
  SequenceDataset dataset;
  TemplateTable templates;
  json doc;
};

LoadedDataset load_dataset(const fs::path& path) {
  LoadedDataset d;
  d.doc = read_json(path);
  try {
    d.dataset = SequenceDataset::from_json(d.doc);
    d.templates = TemplateTable::from_json(d.doc.at("templates"));
  } catch (const std::exception& e) {
    throw Error("bad dataset file " + path.string() + ": " + e.what());
  }
  return d;
}

std::string template_text(const TemplateTable& t, int id) {
  return id >= 0 && static_cast<std::size_t>(id) < t.size() ? t.templates()[static_cast<std::size_t>(id)].text
                                                            : std::string{};
}

int cmd_synth(const PipelineConfig& c, const Options& o, std::ostream& out) {
  SynthConfig sc = c.scenario == "cascade-basic" ? SynthConfig::cascade_basic() : SynthConfig::from_json(read_json(c.scenario));
  sc.total_messages = c.synth_messages;
  sc.noise_fraction = c.synth_noise;
  sc.seed = c.seed;
  const auto result = generate(sc);

  std::ostringstream jsonl;
  write_jsonl(jsonl, result.batch);
  const fs::path dir = o.out;
  write_file_atomic(dir / "records.jsonl", jsonl.str());
  json truth = result.truth.to_json();
  truth["config"] = c.to_json();
  write_json(dir / "ground_truth.json", truth);
  write_json(dir / "synth.json", {{"config", c.to_json()},
                                  {"scenario", sc.to_json()},
                                  {"records", result.batch.records.size()},
                                  {"templates", configured_templates(sc)}});
  out << "synth: " << result.batch.records.size() << " records -> " << (dir / "records.jsonl").string() << "\n";
  return kExitOk;
}

int cmd_ingest(const PipelineConfig& c, const Options& o, std::ostream& out) {
  RecordBatch raw = read_records(o.input, c.resolved_schema(), c.input_format());
  const json parsed = drop_summary(raw);
  auto prep = prepare_sequences(std::move(raw), c);
  const auto buckets = bucketize(prep.batch, c.bucket_width);

  // Origins are stored as source line numbers.
  std::vector<std::size_t> lines(prep.dataset.origins().size());
  for (std::size_t i = 0; i < lines.size(); ++i) lines[i] = prep.batch.records[prep.dataset.origins()[i]].source_line;
  prep.dataset.set_origins(std::move(lines));

  json doc = prep.dataset.to_json();
  doc["templates"] = prep.templates.to_json();
  doc["config"] = c.to_json();

  json bucket_list = json::array();
  for (const auto& b : buckets) bucket_list.push_back({{"start", b.start}, {"records", b.records.size()}});
  const json summary = {{"config", c.to_json()},
                        {"parsed", parsed},
                        {"drops", drop_summary(prep.batch)},
                        {"records", prep.batch.records.size()},
                        {"templates", prep.templates.size()},
                        {"windows", prep.dataset.size()},
                        {"buckets", {{"count", buckets.size()}, {"width", c.bucket_width}, {"list", bucket_list}}}};

  const fs::path dir = o.out;
  write_json(dir / "dataset.json", doc);
  write_json(dir / "ingest.json", summary);
  out << "ingest: " << prep.batch.records.size() << " records, " << prep.templates.size() << " templates, "
      << prep.dataset.size() << " windows, " << buckets.size() << " buckets\n";
  return kExitOk;
}

int cmd_cluster(const PipelineConfig& c, const Options& o, std::ostream& out) {
  RecordBatch raw = read_records(o.input, c.resolved_schema(), c.input_format());
  const json parsed = drop_summary(raw);
  const auto clusters = cluster_records(std::move(raw), c);
  json doc = cluster_summary(clusters);
  doc["config"] = c.to_json();
  doc["parsed"] = parsed;
  doc["drops"] = drop_summary(clusters.batch);
  write_json(fs::path(o.out) / "clusters.json", doc);
  out << "cluster: k=" << clusters.model.k << ", " << clusters.model.assignments.size()
      << " messages, inertia " << clusters.model.inertia << "\n";
  return kExitOk;
}

int cmd_train(const PipelineConfig& c, const Options& o, std::ostream& out) {
  const auto data = load_dataset(o.input);
  auto tc = c.train_config();
  tc.class_weights = resolve_class_weights(c.class_weights, data.dataset);
  const fs::path dir = o.out;
  tc.checkpoint_dir = dir / "checkpoints";
  const auto arch = c.architecture(data.dataset.num_classes());

  const auto t0 = std::chrono::steady_clock::now();
  auto result = train(data.dataset, arch, tc);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const json echo = {{"config", c.to_json()}, {"train", tc.to_json()}, {"architecture", arch.to_json()}};
  save_checkpoint(dir / "model.ckpt", Checkpoint{result.model, result.report.epochs_run, echo, {}});
  json report = echo;
  report["report"] = result.report.to_json();
  write_json(dir / "train_report.json", report);
  const auto& last = result.report.epochs.back();
  out << "train: " << result.report.epochs_run << " epochs, loss " << last.train_loss << ", val accuracy "
      << last.val_accuracy << " (" << secs << " s)\n";
  return kExitOk;
}

int cmd_predict(const PipelineConfig& c, const Options& o, std::ostream& out) {
  const auto ckpt = load_checkpoint(o.model);
  const auto data = load_dataset(o.input);
  const auto t0 = std::chrono::steady_clock::now();
  const auto pred = predict(ckpt.model, data.dataset, 1024, c.train_config().precision);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::string csv = "window,target,predicted,probability\n";
  std::size_t correct = 0;
  char line[96];
  for (std::size_t i = 0; i < data.dataset.size(); ++i) {
    const int target = data.dataset[i].target;
    const int cls = pred.classes[i];
    correct += cls == target;
    std::snprintf(line, sizeof line, "%zu,%d,%d,%.9f\n", i, target, cls, pred.row(i)[static_cast<std::size_t>(cls)]);
    csv += line;
  }
  const double acc = data.dataset.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.dataset.size());
  const fs::path dir = o.out;
  write_file_atomic(dir / "predictions.csv", csv);
  write_json(dir / "predict.json", {{"config", c.to_json()}, {"windows", data.dataset.size()}, {"accuracy", acc}});
  out << "predict: " << data.dataset.size() << " windows, accuracy " << acc << " (" << secs << " s)\n";
  return kExitOk;
}

std::vector<int> labels_from_truth(const fs::path& path, const SequenceDataset& dataset) {
  const auto truth = GroundTruth::from_json(read_json(path));
  const auto& origins = dataset.origins();
  if (origins.empty()) throw Error("dataset has no record origins to match against ground truth");
  std::vector<int> labels;
  labels.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto line = origins[dataset.target_offset(i)];
    if (line >= truth.entries.size()) throw Error("ground truth does not cover record " + std::to_string(line));
    labels.push_back(truth.entries[line].family);
  }
  return labels;
}

int cmd_introspect(const PipelineConfig& c, const Options& o, std::ostream& out) {
  const auto ckpt = load_checkpoint(o.model);
  const auto data = load_dataset(o.input);
  const auto acts = hidden_activations(ckpt.model, data.dataset);
  std::vector<std::string> messages;
  messages.reserve(data.dataset.size());
  for (std::size_t i = 0; i < data.dataset.size(); ++i) messages.push_back(template_text(data.templates, data.dataset[i].target));
  const auto report = cluster_by_argmax(acts, messages, o.signed_max ? ArgmaxMode::signed_value : ArgmaxMode::absolute);

  json groups = json::array();
  for (const auto& [unit, members] : report.groups) {
    std::map<std::string, std::size_t> counts;
    for (const auto& m : members) ++counts[m.message];
    std::vector<std::pair<std::string, std::size_t>> top(counts.begin(), counts.end());
    std::stable_sort(top.begin(), top.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    json texts = json::array();
    if (top.size() > o.cap) top.resize(o.cap);
    for (const auto& [text, n] : top) texts.push_back({{"text", text}, {"count", n}});
    groups.push_back({{"unit", unit}, {"size", members.size()}, {"messages", texts}});
  }
  json doc = {{"config", c.to_json()},
              {"units", report.units},
              {"windows", report.windows},
              {"coverage", report.coverage()},
              {"groups", groups}};
  if (!o.truth.empty()) doc["purity"] = purity(report, labels_from_truth(o.truth, data.dataset));
  write_json(fs::path(o.out) / "units.json", doc);
  out << "introspect: " << report.groups.size() << " of " << report.units << " units used";
  if (doc.contains("purity")) out << ", purity " << doc["purity"].get<double>();
  out << "\n";
  return kExitOk;
}

int cmd_attend(const PipelineConfig& c, const Options& o, std::ostream& out) {
  const auto ckpt = load_checkpoint(o.model);
  const auto data = load_dataset(o.input);
  if (o.scale != "row" && o.scale != "global") throw UsageError("--scale must be row or global");
  const auto n = o.rows == 0 ? data.dataset.size() : std::min(o.rows, data.dataset.size());
  const auto map = extract_heatmap(ckpt.model, data.dataset.slice(0, n));
  const fs::path dir = o.out;
  const fs::path prefix = o.out_prefix.empty() ? dir / "heatmap" : fs::path(o.out_prefix);
  fs::create_directories(dir);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  render_heatmap(map, prefix, o.scale == "row" ? HeatmapScale::row_max : HeatmapScale::global_max);

  std::vector<double> mean(map.cols, 0.0);
  std::vector<std::size_t> argmax(map.cols, 0);
  for (std::size_t r = 0; r < map.rows; ++r) {
    const auto row = map.row(r);
    for (std::size_t j = 0; j < map.cols; ++j) mean[j] += row[j] / static_cast<double>(map.rows);
    ++argmax[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())];
  }
  write_json(dir / "attention.json",
             {{"config", c.to_json()}, {"rows", map.rows}, {"cols", map.cols}, {"column_mean", mean}, {"argmax_histogram", argmax}});
  out << "attend: " << map.rows << " x " << map.cols << " heatmap -> " << prefix.string() << ".pgm" << "\n";
  return kExitOk;
}

int cmd_report(const PipelineConfig& c, const Options& o, std::ostream& out) {
  const fs::path src = o.from.empty() ? fs::path(o.out) : fs::path(o.from);
  json doc = {{"config", c.to_json()}};
  auto take = [&](const char* file, const char* key, auto&& pick) {
    const auto path = src / file;
    if (fs::exists(path)) doc[key] = pick(read_json(path));
  };
  take("ingest.json", "drops", [](const json& j) { return json{{"parsed", j.at("parsed")}, {"filtered", j.at("drops")}}; });
  take("clusters.json", "occupancy", [](const json& j) { return j.at("occupancy"); });
  take("clusters.json", "bic", [](const json& j) { return j.value("bic", json(nullptr)); });
  take("train_report.json", "learning_curve", [](const json& j) { return j.at("report"); });
  take("units.json", "purity", [](const json& j) { return j.value("purity", json(nullptr)); });
  take("predict.json", "prediction", [](const json& j) { return json{{"accuracy", j.at("accuracy")}, {"windows", j.at("windows")}}; });
  if (doc.size() == 1) throw Error("no artifacts found in " + src.string());
  write_json(fs::path(o.out) / "report.json", doc);
  out << "report: " << doc.size() - 1 << " sections -> " << (fs::path(o.out) / "report.json").string() << "\n";
  return kExitOk;
}

void error_record(std::ostream& err, const std::string& sub, const char* kind, const std::string& message) {
  err << json{{"error", message}, {"kind", kind}, {"subcommand", sub}}.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Router syslog templating, clustering and sequence modelling", "logsentinel"};
  app.require_subcommand(1, 1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key = value config file");
    for (const auto& f : kFlags) sub->add_option(f.name, o.flags[f.key], f.help);
    sub->add_option("--set", o.sets, "override any config key (key=value)");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    return sub;
  };

  auto* synth = common(app.add_subcommand("synth", "generate a synthetic labelled syslog stream"));
  synth->add_option("--scenario", o.scenario, "cascade-basic or a scenario JSON file");
  synth->add_option("--messages", o.messages, "number of records");
  synth->add_option("--noise", o.noise, "noise fraction");

  auto* ingest = common(app.add_subcommand("ingest", "parse, normalize and window a syslog export"));
  ingest->add_option("input,--input", o.input, "JSON Lines or CSV file")->required();

  auto* cluster = common(app.add_subcommand("cluster", "K-Means over bag-of-words messages"));
  cluster->add_option("input,--input", o.input, "JSON Lines or CSV file")->required();
  cluster->add_option("--k-range", o.k_range, "comma-separated k values scored by BIC");

  auto* trainc = common(app.add_subcommand("train", "train the sequence model on an ingested dataset"));
  trainc->add_option("dataset,--input", o.input, "dataset.json from ingest")->required();

  auto* predictc = common(app.add_subcommand("predict", "next-template prediction"));
  predictc->add_option("dataset,--input", o.input, "dataset.json from ingest")->required();
  predictc->add_option("--model", o.model, "checkpoint file")->required();

  auto* introspect = common(app.add_subcommand("introspect", "group windows by most excited hidden unit"));
  introspect->add_option("dataset,--input", o.input, "dataset.json from ingest")->required();
  introspect->add_option("--model", o.model, "checkpoint file")->required();
  introspect->add_option("--truth", o.truth, "ground_truth.json for purity");
  introspect->add_option("--cap", o.cap, "sample messages listed per unit")->capture_default_str();
  introspect->add_flag("--signed", o.signed_max, "argmax over signed activations instead of magnitude");

  auto* attendc = common(app.add_subcommand("attend", "attention heatmap"));
  attendc->add_option("dataset,--input", o.input, "dataset.json from ingest")->required();
  attendc->add_option("--model", o.model, "checkpoint file")->required();
  attendc->add_option("--rows", o.rows, "first N windows only (0 = all)");
  attendc->add_option("--scale", o.scale, "row or global")->capture_default_str();
  attendc->add_option("--out-prefix", o.out_prefix, "path prefix for the .pgm/.csv pair (default: <out>/heatmap)");

  auto* report = common(app.add_subcommand("report", "aggregate artifacts into report.json"));
  report->add_option("--from", o.from, "artifact directory (default: --out)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const std::string sub = args.empty() ? "" : args.front();
    error_record(err, sub, "usage", e.what());
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    apply_thread_limit();
    const auto cfg = resolve_config(o);
    if (name == "synth") return cmd_synth(cfg, o, out);
    if (name == "ingest") return cmd_ingest(cfg, o, out);
    if (name == "cluster") return cmd_cluster(cfg, o, out);
    if (name == "train") return cmd_train(cfg, o, out);
    if (name == "predict") return cmd_predict(cfg, o, out);
    if (name == "introspect") return cmd_introspect(cfg, o, out);
    if (name == "attend") return cmd_attend(cfg, o, out);
    if (name == "report") return cmd_report(cfg, o, out);
    error_record(err, name, "usage", "unknown subcommand");
    return kExitUsage;
  } catch (const UsageError& e) {
    error_record(err, name, "usage", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    error_record(err, name, "runtime", e.what());
    return kExitFailure;
  }
}

}  // namespace logsentinel
