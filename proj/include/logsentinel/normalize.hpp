#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace logsentinel {

struct NormalizerOptions {
  /// A token directly after one of these words is treated as a username and
  /// removed when it contains anything besides lowercase letters.
  std::vector<std::string> user_keywords{"user"};
  std::size_t max_length = 50;
};

/// Reduces a raw syslog message to its template text: lowercase, IPv4/IPv6,
/// dates, times, usernames and digits removed, punctuation turned into
/// single spaces, truncated to max_length on a word boundary. The result
/// only contains [a-z] and single spaces and is a fixed point of the
/// function.
std::string normalize_message(std::string_view raw, const NormalizerOptions& options = {});

struct Template {
  int id = 0;
  std::string text;
  std::size_t count = 0;
};

/// Distinct normalized messages with dense ids in first-seen order. After
/// collapse_rare, rare texts resolve to the OTHER template.
class TemplateTable {
 public:
  static constexpr std::string_view kOtherText = "<other>";

  const std::vector<Template>& templates() const { return templates_; }
  std::size_t size() const { return templates_.size(); }
  std::size_t total() const { return total_; }
  std::optional<int> other_id() const { return other_id_; }

  /// Id for a normalized text; collapsed texts map to the OTHER id.
  std::optional<int> id_of(std::string_view text) const;

  /// Counts one occurrence, creating the template if new. Returns its id.
  int observe(std::string_view text);

  std::vector<std::size_t> counts() const;

  nlohmann::json to_json() const;
  static TemplateTable from_json(const nlohmann::json& j);

 private:
  friend TemplateTable collapse_rare(const TemplateTable& table, double min_frac);

  std::vector<Template> templates_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> collapsed_;
  std::size_t total_ = 0;
  std::optional<int> other_id_;
};

TemplateTable mine_templates(std::span<const std::string> messages);

/// Merges every template with count / total <= min_frac into one OTHER
/// template appended after the survivors. 0 <= min_frac < 1.
TemplateTable collapse_rare(const TemplateTable& table, double min_frac = 0.01);

}  // namespace logsentinel
