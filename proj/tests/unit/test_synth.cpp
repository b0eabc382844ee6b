#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "logsentinel/normalize.hpp"
#include "logsentinel/synth.hpp"

using namespace logsentinel;

namespace {

SynthConfig lag_one() {
  SynthConfig c;
  c.families = {{"net",
                 {{"link {IP} down", TemplateRole::spontaneous},
                  {"link {IP} restored after {INT} retries", TemplateRole::consequence},
                  {"poll from {IP} at {TIME}"}},
                 0.05}};
  c.rules = {{0, 1, 1, 1.0}};
  c.noise_fraction = 0.0;
  c.total_messages = 5000;
  return c;
}

std::string jsonl(const RecordBatch& b) {
  std::ostringstream s;
  write_jsonl(s, b);
  return s.str();
}

}  // namespace

TEST_CASE("lag-one rule puts the consequence right after every trigger") {
  const auto out = generate(lag_one());
  const auto& e = out.truth.entries;
  REQUIRE(e.size() == 5000);
  std::size_t triggers = 0;
  for (std::size_t i = 0; i + 1 < e.size(); ++i) {
    if (e[i].template_id != 0) continue;
    ++triggers;
    CHECK(e[i + 1].template_id == 1);
    REQUIRE(e[i + 1].parent.has_value());
    CHECK(*e[i + 1].parent == i);
  }
  CHECK(triggers > 100);
  for (std::size_t i = 0; i < e.size(); ++i)
    if (e[i].template_id == 1) CHECK(e[i].parent.has_value());
}

TEST_CASE("longer lags count signal positions, skipping noise, and collisions only delay") {
  auto c = SynthConfig::cascade_basic();
  c.total_messages = 20000;
  const auto out = generate(c);
  const auto& e = out.truth.entries;
  std::size_t children = 0, exact = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (!e[i].parent) continue;
    ++children;
    const auto p = *e[i].parent;
    REQUIRE(p < i);
    int signal_between = 0;
    for (std::size_t k = p + 1; k < i; ++k) signal_between += !e[k].noise;
    const CascadeRule* rule = nullptr;
    for (const auto& r : c.rules)
      if (r.trigger == e[p].template_id && r.consequence == e[i].template_id) rule = &r;
    REQUIRE(rule != nullptr);
    CHECK(signal_between + 1 >= rule->lag);
    exact += signal_between + 1 == rule->lag;
  }
  CHECK(children > 100);
  CHECK(static_cast<double>(exact) >= 0.95 * static_cast<double>(children));
}

TEST_CASE("same seed gives the same bytes") {
  auto c = SynthConfig::cascade_basic();
  c.total_messages = 3000;
  const auto a = generate(c);
  const auto b = generate(c);
  CHECK(jsonl(a.batch) == jsonl(b.batch));
  CHECK(a.truth.to_json().dump() == b.truth.to_json().dump());
  c.seed = 8;
  CHECK(jsonl(generate(c).batch) != jsonl(a.batch));
}

TEST_CASE("noise share stays within three binomial sigmas") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto c = SynthConfig::cascade_basic();
    c.total_messages = 10000;
    c.seed = seed;
    const auto out = generate(c);
    std::size_t noise = 0;
    for (const auto& e : out.truth.entries) {
      noise += e.noise;
      if (e.noise) {
        CHECK_FALSE(e.parent.has_value());
        CHECK(e.family == static_cast<int>(c.families.size()));
      }
    }
    const double sigma = std::sqrt(10000 * 0.1 * 0.9);
    CHECK(std::abs(static_cast<double>(noise) - 1000.0) <= 3 * sigma);
  }
}

TEST_CASE("records are time ordered and labelled") {
  auto c = SynthConfig::cascade_basic();
  c.total_messages = 2000;
  const auto out = generate(c);
  REQUIRE(out.batch.records.size() == 2000);
  const auto labels = family_labels(out.truth);
  CHECK(labels.size() == 2000);
  CHECK(out.truth.family_names.back() == "noise");
  CHECK(out.truth.family_names.size() == c.families.size() + 1);
  for (std::size_t i = 0; i < out.batch.records.size(); ++i) {
    CHECK(out.batch.records[i].source_line == i);
    if (i > 0) CHECK(out.batch.records[i - 1].time <= out.batch.records[i].time);
    CHECK(labels[i] == out.truth.entries[i].family);
    if (!out.truth.entries[i].noise) CHECK(c.family_of(out.truth.entries[i].template_id) == labels[i]);
  }
}

TEST_CASE("normalizing generated messages recovers the configured templates") {
  auto c = SynthConfig::cascade_basic();
  c.total_messages = 20000;
  const auto out = generate(c);
  const auto expected = configured_templates(c);
  REQUIRE(expected.size() == c.template_count() + c.noise_templates.size());
  CHECK(std::set<std::string>(expected.begin(), expected.end()).size() == expected.size());
  std::set<std::string> produced;
  for (std::size_t i = 0; i < out.batch.records.size(); ++i) {
    const auto t = normalize_message(out.batch.records[i].message);
    CHECK(t == expected[static_cast<std::size_t>(out.truth.entries[i].template_id)]);
    produced.insert(t);
  }
  CHECK(produced.size() == expected.size());
}

TEST_CASE("invalid scenarios are rejected") {
  auto c = lag_one();
  c.rules = {{0, 9, 1, 1.0}};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
  c = lag_one();
  c.rules[0].lag = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = lag_one();
  c.noise_fraction = 0.2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = lag_one();
  c.families[0].templates[0].text = "bad {SLOT}";
  CHECK_THROWS(generate(c));
  CHECK_THROWS_AS(c.template_at(99), std::out_of_range);
}

TEST_CASE("scenario and ground truth JSON round trip") {
  const auto c = SynthConfig::cascade_basic();
  CHECK(c.template_count() == 20);
  CHECK(c.families.size() == 4);
  CHECK(c.rules.size() == 3);
  CHECK(c.total_messages == 50000);
  CHECK(c.noise_fraction == 0.1);
  const auto back = SynthConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  auto small = c;
  small.total_messages = 500;
  const auto out = generate(small);
  const auto t = GroundTruth::from_json(out.truth.to_json());
  REQUIRE(t.entries.size() == out.truth.entries.size());
  for (std::size_t i = 0; i < t.entries.size(); ++i) {
    CHECK(t.entries[i].family == out.truth.entries[i].family);
    CHECK(t.entries[i].template_id == out.truth.entries[i].template_id);
    CHECK(t.entries[i].parent == out.truth.entries[i].parent);
    CHECK(t.entries[i].noise == out.truth.entries[i].noise);
  }
}
