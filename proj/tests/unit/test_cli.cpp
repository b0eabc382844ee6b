#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "logsentinel/cli.hpp"

using namespace logsentinel;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("logsentinel_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

json read(const fs::path& p) { return json::parse(slurp(p)); }

// synth, ingest, train (tiny model), predict, introspect, attend, report.
void full_run(const fs::path& d) {
  const auto s = d.string();
  REQUIRE(cli({"synth", "--messages", "3000", "--out", s}).code == 0);
  REQUIRE(cli({"ingest", (d / "records.jsonl").string(), "--out", s}).code == 0);
  REQUIRE(cli({"cluster", (d / "records.jsonl").string(), "--k", "8", "--out", s}).code == 0);
  REQUIRE(cli({"train", (d / "dataset.json").string(), "--set", "hidden=8", "--set", "attn_dim=4", "--epochs", "3",
               "--out", s})
              .code == 0);
  const auto model = (d / "model.ckpt").string();
  REQUIRE(cli({"predict", (d / "dataset.json").string(), "--model", model, "--out", s}).code == 0);
  REQUIRE(cli({"introspect", (d / "dataset.json").string(), "--model", model, "--truth", (d / "ground_truth.json").string(),
               "--out", s})
              .code == 0);
  REQUIRE(cli({"attend", (d / "dataset.json").string(), "--model", model, "--rows", "40", "--out", s}).code == 0);
  REQUIRE(cli({"report", "--out", s}).code == 0);
}

}  // namespace

TEST_CASE("synth, ingest and cluster emit occupancy") {
  const auto d = fresh("smoke");
  const auto s = d.string();
  auto r = cli({"synth", "--messages", "2000", "--out", s});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(d / "records.jsonl"));
  CHECK(fs::exists(d / "ground_truth.json"));
  r = cli({"ingest", (d / "records.jsonl").string(), "--out", s});
  REQUIRE(r.code == 0);
  const auto ingest = read(d / "ingest.json");
  CHECK(ingest.at("parsed").at("lines_read") == 2000);
  CHECK(ingest.at("records").get<std::size_t>() <= 2000);
  r = cli({"cluster", "--input", (d / "records.jsonl").string(), "--k", "5", "--out", s});
  REQUIRE(r.code == 0);
  const auto clusters = read(d / "clusters.json");
  const auto& entries = clusters.at("occupancy").at("entries");
  REQUIRE(entries.size() == 5);
  std::size_t total = 0;
  for (const auto& e : entries) total += e.at("members").get<std::size_t>();
  CHECK(total == clusters.at("rows").get<std::size_t>());
  CHECK(clusters.at("config").at("k") == 5);
}

TEST_CASE("train echoes the default training schedule") {
  const auto d = fresh("train");
  const auto s = d.string();
  REQUIRE(cli({"synth", "--messages", "1500", "--out", s}).code == 0);
  REQUIRE(cli({"ingest", (d / "records.jsonl").string(), "--out", s}).code == 0);
  REQUIRE(cli({"train", (d / "dataset.json").string(), "--set", "hidden=6", "--set", "attn_dim=3", "--out", s}).code == 0);
  const auto rep = read(d / "train_report.json");
  CHECK(rep.at("train").at("max_epochs") == 20);
  CHECK(rep.at("train").at("batch_size") == 128);
  CHECK(rep.at("train").at("early_stop_delta") == 1e-5);
  CHECK(rep.at("config").at("epochs") == 20);
  const int epochs = rep.at("report").at("epochs_run");
  CHECK(epochs >= 1);
  CHECK(epochs <= 20);
  CHECK(fs::exists(d / "checkpoints" / "epoch_001.ckpt"));
  CHECK(fs::exists(d / "model.ckpt"));
}

TEST_CASE("missing input fails without leaving artifacts") {
  const auto d = fresh("missing");
  for (const char* sub : {"ingest", "cluster"}) {
    const auto r = cli({sub, (d / "nope.jsonl").string(), "--out", d.string()});
    CHECK(r.code == 1);
    const auto rec = json::parse(r.err);
    CHECK(rec.at("kind") == "runtime");
    CHECK(rec.at("subcommand") == sub);
    CHECK_FALSE(fs::exists(d));
  }
  const auto r = cli({"train", (d / "dataset.json").string(), "--out", d.string()});
  CHECK(r.code == 1);
  CHECK_FALSE(fs::exists(d / "train_report.json"));
}

TEST_CASE("usage errors exit with 2") {
  const auto d = fresh("usage");
  CHECK(cli({"bogus"}).code == 2);
  CHECK(cli({}).code == 2);
  const auto r = cli({"synth", "--set", "no_such_key=1", "--out", d.string()});
  CHECK(r.code == 2);
  CHECK(json::parse(r.err).at("kind") == "usage");
  CHECK(cli({"synth", "--k", "zero", "--out", d.string()}).code == 2);
  CHECK(cli({"synth", "--seq-len", "0", "--out", d.string()}).code == 2);
  CHECK_FALSE(fs::exists(d / "records.jsonl"));
}

TEST_CASE("config file values are overridden by flags") {
  const auto d = fresh("config");
  fs::create_directories(d);
  std::ofstream(d / "run.conf") << "# comment\nk = 4\nseed = 5\nsynth_messages = 800\n";
  const auto s = d.string();
  REQUIRE(cli({"synth", "--config", (d / "run.conf").string(), "--out", s}).code == 0);
  const auto synth = read(d / "synth.json");
  CHECK(synth.at("config").at("seed") == 5);
  CHECK(synth.at("config").at("synth_messages") == 800);
  REQUIRE(cli({"cluster", (d / "records.jsonl").string(), "--config", (d / "run.conf").string(), "--k", "3", "--out", s})
              .code == 0);
  CHECK(read(d / "clusters.json").at("config").at("k") == 3);
  std::ofstream(d / "bad.conf") << "colour = blue\n";
  CHECK(cli({"synth", "--config", (d / "bad.conf").string(), "--out", s}).code == 2);
}

TEST_CASE("identical runs produce identical artifacts") {
  const auto d = fresh("repro");
  full_run(d);
  std::map<std::string, std::string> first;
  for (const auto& e : fs::recursive_directory_iterator(d))
    if (e.is_regular_file()) first[fs::relative(e.path(), d).string()] = slurp(e.path());
  full_run(d);
  std::size_t compared = 0;
  for (const auto& [name, bytes] : first) {
    CAPTURE(name);
    CHECK(slurp(d / name) == bytes);
    ++compared;
  }
  CHECK(compared >= 15);

  const auto rep = read(d / "report.json");
  for (const char* key : {"drops", "occupancy", "learning_curve", "purity", "prediction", "config"}) {
    CAPTURE(key);
    CHECK(rep.contains(key));
  }
  CHECK(rep.at("learning_curve").at("epochs").size() == rep.at("learning_curve").at("epochs_run").get<std::size_t>());
  const double purity = rep.at("purity");
  CHECK(purity > 0.0);
  CHECK(purity <= 1.0);
  const auto attention = read(d / "attention.json");
  CHECK(attention.at("rows") == 40);
  CHECK(slurp(d / "heatmap.pgm").rfind("P5\n15 40\n255\n", 0) == 0);
}
