#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace logsentinel {

/// One parsed syslog line. Priority is on the 1-based five level scale
/// (1 = Emergency ... 5 = Warning).
struct SyslogRecord {
  std::string ip;
  std::int64_t time = 0;  // unix seconds
  std::string message;
  int priority = 0;
  std::string hostname;
  std::string ifdescr;
  std::string vendor;
  std::string device_type;
  std::string market_site;
  std::optional<int> facility_num;
  std::size_t source_line = 0;  // 0-based data line index in the source
};

struct RecordBatch {
  std::vector<SyslogRecord> records;  // sorted by time
  std::size_t lines_read = 0;
  std::size_t dropped_incomplete = 0;
  std::size_t dropped_outlier_time = 0;
  std::size_t dropped_priority = 0;
};

struct TimeBucket {
  std::int64_t start = 0;
  std::int64_t width = 0;
  std::vector<SyslogRecord> records;
};

enum class InputFormat { automatic, json_lines, csv };

/// Maps source column/key names onto SyslogRecord fields.
///
/// Only ip, time, message and priority are required; optional fields that are
/// missing in a source stay empty. `severity_base` is the value the source
/// uses for its most severe level (1 for the native scale, 0 for RFC 5424
/// style numbering).
struct Schema {
  std::string ip = "ip";
  std::string time = "time";
  std::string message = "message";
  std::string priority = "priority";
  std::string hostname = "hostname";
  std::string ifdescr = "ifdescr";
  std::string vendor = "vendor";
  std::string device_type = "device_type";
  std::string market_site = "market_site";
  std::string facility_num = "facility_num";
  int severity_base = 1;

  /// "default", "splunk" (sender_* fields) or "broker" (IP/Time/message_words/...).
  static Schema preset(std::string_view name);
  /// Accepts a preset name, a path to a JSON object file, or inline
  /// `field=source,...` pairs (optionally starting with a preset name).
  static Schema parse(std::string_view spec);
  static Schema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Parses JSON Lines or CSV (with header). Lines lacking a required field or
/// carrying an ill-typed one are counted in `dropped_incomplete`; an
/// unreadable stream throws logsentinel::Error.
RecordBatch parse_records(std::istream& in, const Schema& schema = {},
                          InputFormat format = InputFormat::automatic);
RecordBatch read_records(const std::filesystem::path& path, const Schema& schema = {},
                         InputFormat format = InputFormat::automatic);

/// Keeps records with priority < threshold. threshold must be in [1, 6].
RecordBatch filter_priority(RecordBatch batch, int threshold = 5);

/// Drops records further than `window` seconds from the median timestamp.
RecordBatch sanitize_timestamps(RecordBatch batch, std::int64_t window = 86400);

/// Epoch-aligned fixed-width buckets, ascending, empty buckets omitted.
std::vector<TimeBucket> bucketize(const RecordBatch& batch, std::int64_t width = 300);

/// Parses integer unix seconds or an ISO 8601 timestamp
/// (YYYY-MM-DD[T ]HH:MM:SS[.frac][Z|+HH:MM]). Returns nullopt when malformed.
std::optional<std::int64_t> parse_timestamp(std::string_view text);

nlohmann::json drop_summary(const RecordBatch& batch);

}  // namespace logsentinel
