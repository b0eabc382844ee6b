#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "logsentinel/ingest.hpp"

namespace logsentinel {

enum class TemplateRole {
  periodic,     // part of the fixed background polling cycle
  spontaneous,  // fires at random with the family's base rate
  consequence,  // only emitted by cascade rules
};

/// Raw template text with slots {IP}, {TIME}, {DATE}, {USER}, {INT}.
struct TemplateSpec {
  std::string text;
  TemplateRole role = TemplateRole::periodic;
  int priority = 4;
};

struct EventFamily {
  std::string name;
  std::vector<TemplateSpec> templates;
  double base_rate = 0.01;  // probability per signal position of a spontaneous event
};

/// `consequence` follows `trigger` exactly `lag` signal positions later
/// (noise records do not count) with the given probability. Template ids
/// index the families' templates flattened in declaration order.
struct CascadeRule {
  int trigger = 0;
  int consequence = 0;
  int lag = 1;
  double probability = 1.0;
};

struct SynthConfig {
  std::vector<EventFamily> families;
  std::vector<CascadeRule> rules;
  std::vector<std::string> noise_templates;  // low-priority chatter
  int noise_priority = 5;
  std::size_t total_messages = 50000;
  double noise_fraction = 0.1;
  std::int64_t start_time = 1515788400;  // 2018-01-12 20:20:00 UTC
  std::int64_t time_span = 3600;
  int router_count = 8;
  std::uint64_t seed = 7;

  /// 20 templates in 4 families, 3 deterministic rules, 10% noise, 50,000 messages.
  static SynthConfig cascade_basic();
  static SynthConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  void validate() const;
  std::size_t template_count() const;
  const TemplateSpec& template_at(int id) const;
  int family_of(int id) const;
};

struct GroundTruthEntry {
  int family = -1;       // families.size() for noise
  int template_id = -1;  // flattened id; noise templates follow the family templates
  std::optional<std::size_t> parent;
  bool noise = false;
};

struct GroundTruth {
  std::vector<std::string> family_names;  // last entry is "noise"
  std::vector<GroundTruthEntry> entries;  // one per record, in record order

  nlohmann::json to_json() const;
  static GroundTruth from_json(const nlohmann::json& j);
};

struct SynthOutput {
  RecordBatch batch;
  GroundTruth truth;
};

/// Deterministic per seed. Records come out time-ordered with
/// source_line equal to their index.
SynthOutput generate(const SynthConfig& config);

/// Family label per record index.
std::vector<int> family_labels(const GroundTruth& truth);

/// The normalized text of every configured template (family templates, then
/// noise templates): the slots removed and the result normalized.
std::vector<std::string> configured_templates(const SynthConfig& config);

/// JSON Lines in the default ingest schema.
void write_jsonl(std::ostream& out, const RecordBatch& batch);

}  // namespace logsentinel
