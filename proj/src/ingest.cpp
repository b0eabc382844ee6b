#include "logsentinel/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <stdexcept>

#include "logsentinel/error.hpp"

namespace logsentinel {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// A source value: a JSON value or a raw CSV cell.
struct Cell {
  const json* value = nullptr;
  std::optional<std::string_view> text;

  bool present() const { return value != nullptr || text.has_value(); }

  std::optional<std::string> as_string() const {
    if (text) return std::string(*text);
    if (value == nullptr || value->is_null()) return std::nullopt;
    if (value->is_string()) return value->get<std::string>();
    if (value->is_number_integer()) return std::to_string(value->get<std::int64_t>());
    return std::nullopt;
  }

  std::optional<std::int64_t> as_int() const {
    if (text) return parse_int(*text);
    if (value == nullptr) return std::nullopt;
    if (value->is_number_integer()) return value->get<std::int64_t>();
    if (value->is_number_float()) {
      const double d = value->get<double>();
      if (!std::isfinite(d) || d != std::floor(d)) return std::nullopt;
      return static_cast<std::int64_t>(d);
    }
    if (value->is_string()) return parse_int(value->get_ref<const std::string&>());
    return std::nullopt;
  }

  std::optional<std::int64_t> as_time() const {
    if (text) return parse_timestamp(*text);
    if (value == nullptr) return std::nullopt;
    if (value->is_number_integer()) return value->get<std::int64_t>();
    if (value->is_number_float()) {
      const double d = value->get<double>();
      if (!std::isfinite(d)) return std::nullopt;
      return static_cast<std::int64_t>(std::floor(d));
    }
    if (value->is_string()) return parse_timestamp(value->get_ref<const std::string&>());
    return std::nullopt;
  }
};

template <typename Lookup>
std::optional<SyslogRecord> build_record(const Schema& schema, Lookup&& lookup) {
  SyslogRecord r;
  auto ip = lookup(schema.ip).as_string();
  auto time = lookup(schema.time).as_time();
  auto message = lookup(schema.message).as_string();
  auto priority = lookup(schema.priority).as_int();
  if (!ip || ip->empty() || !time || *time <= 0 || !message || message->empty() || !priority) {
    return std::nullopt;
  }
  const std::int64_t level = *priority - schema.severity_base + 1;
  if (level < 1 || level > 5) return std::nullopt;
  r.ip = std::move(*ip);
  r.time = *time;
  r.message = std::move(*message);
  r.priority = static_cast<int>(level);
  auto opt = [&](const std::string& key) { return lookup(key).as_string().value_or(""); };
  r.hostname = opt(schema.hostname);
  r.ifdescr = opt(schema.ifdescr);
  r.vendor = opt(schema.vendor);
  r.device_type = opt(schema.device_type);
  r.market_site = opt(schema.market_site);
  if (auto f = lookup(schema.facility_num).as_int()) r.facility_num = static_cast<int>(*f);
  return r;
}

std::optional<SyslogRecord> parse_json_line(const std::string& line, const Schema& schema) {
  json obj = json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) return std::nullopt;
  return build_record(schema, [&](const std::string& key) {
    Cell c;
    if (auto it = obj.find(key); it != obj.end()) c.value = &*it;
    return c;
  });
}

// RFC 4180-ish splitting: quoted fields may contain commas and doubled quotes.
// Returns nullopt for an unterminated quote.
std::optional<std::vector<std::string>> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  if (quoted) return std::nullopt;
  out.push_back(std::move(cur));
  return out;
}

bool is_blank(const std::string& line) { return trim(line).empty(); }

}  // namespace

Schema Schema::preset(std::string_view name) {
  Schema s;
  if (name == "default" || name.empty()) return s;
  if (name == "splunk") {
    s.ip = "sender_ip";
    s.time = "sender_unixtime";
    s.message = "sender_message";
    s.priority = "sender_level_num";
    s.facility_num = "sender_facility_num";
    s.hostname = "sender_hostname";
    return s;
  }
  if (name == "broker") {
    s.ip = "IP";
    s.time = "Time";
    s.message = "message_words";
    s.priority = "Priority";
    s.hostname = "Hostname";
    s.ifdescr = "ifdescr";
    s.vendor = "vendor";
    s.device_type = "sp_device_type";
    s.market_site = "market_site";
    return s;
  }
  throw std::invalid_argument("unknown schema preset: " + std::string(name));
}

Schema Schema::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("schema must be a JSON object");
  Schema s = preset(j.value("preset", std::string("default")));
  for (const auto& [key, value] : j.items()) {
    if (key == "preset") continue;
    if (key == "severity_base") {
      s.severity_base = value.get<int>();
      continue;
    }
    const std::string source = value.get<std::string>();
    if (key == "ip") s.ip = source;
    else if (key == "time") s.time = source;
    else if (key == "message") s.message = source;
    else if (key == "priority") s.priority = source;
    else if (key == "hostname") s.hostname = source;
    else if (key == "ifdescr") s.ifdescr = source;
    else if (key == "vendor") s.vendor = source;
    else if (key == "device_type") s.device_type = source;
    else if (key == "market_site") s.market_site = source;
    else if (key == "facility_num") s.facility_num = source;
    else throw std::invalid_argument("unknown schema field: " + key);
  }
  return s;
}

json Schema::to_json() const {
  return json{{"ip", ip},
              {"time", time},
              {"message", message},
              {"priority", priority},
              {"hostname", hostname},
              {"ifdescr", ifdescr},
              {"vendor", vendor},
              {"device_type", device_type},
              {"market_site", market_site},
              {"facility_num", facility_num},
              {"severity_base", severity_base}};
}

Schema Schema::parse(std::string_view spec) {
  spec = trim(spec);
  if (spec.empty()) return {};
  if (spec.find('=') == std::string_view::npos) {
    const std::filesystem::path path{std::string(spec)};
    if (std::filesystem::exists(path)) {
      std::ifstream in(path);
      if (!in) throw Error("cannot read schema file " + path.string());
      json j = json::parse(in, nullptr, false);
      if (j.is_discarded()) throw std::invalid_argument("schema file is not valid JSON: " + path.string());
      return from_json(j);
    }
    return preset(spec);
  }
  json j = json::object();
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    const auto item = trim(spec.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!item.empty()) {
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        j["preset"] = std::string(item);
      } else {
        const std::string key(trim(item.substr(0, eq)));
        const std::string value(trim(item.substr(eq + 1)));
        if (key == "severity_base") {
          auto v = parse_int(value);
          if (!v) throw std::invalid_argument("severity_base must be an integer");
          j[key] = *v;
        } else {
          j[key] = value;
        }
      }
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return from_json(j);
}

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (auto v = parse_int(text)) return v;

  // ISO 8601: YYYY-MM-DD[T ]HH:MM[:SS[.frac]][Z|+HH:MM|-HH:MM]
  auto digits = [&](std::size_t pos, std::size_t n) -> std::optional<int> {
    if (pos + n > text.size()) return std::nullopt;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (text[i] < '0' || text[i] > '9') return std::nullopt;
      v = v * 10 + (text[i] - '0');
    }
    return v;
  };
  auto year = digits(0, 4), month = digits(5, 2), day = digits(8, 2);
  if (!year || !month || !day || text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int hour = 0, minute = 0, second = 0;
  std::size_t pos = 10;
  if (pos < text.size()) {
    if (text[pos] != 'T' && text[pos] != 't' && text[pos] != ' ') return std::nullopt;
    auto h = digits(pos + 1, 2), m = digits(pos + 4, 2);
    if (!h || !m || text[pos + 3] != ':') return std::nullopt;
    hour = *h;
    minute = *m;
    pos += 6;
    if (pos < text.size() && text[pos] == ':') {
      auto s = digits(pos + 1, 2);
      if (!s) return std::nullopt;
      second = *s;
      pos += 3;
      if (pos < text.size() && text[pos] == '.') {
        ++pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
      }
    }
  }
  std::int64_t offset = 0;
  if (pos < text.size()) {
    const char z = text[pos];
    if ((z == 'Z' || z == 'z') && pos + 1 == text.size()) {
      // UTC
    } else if ((z == '+' || z == '-') && pos + 6 == text.size() && text[pos + 3] == ':') {
      auto oh = digits(pos + 1, 2), om = digits(pos + 4, 2);
      if (!oh || !om) return std::nullopt;
      offset = (*oh * 3600 + *om * 60) * (z == '+' ? 1 : -1);
    } else {
      return std::nullopt;
    }
  }
  if (hour > 23 || minute > 59 || second > 60) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{*year}, std::chrono::month{static_cast<unsigned>(*month)},
                           std::chrono::day{static_cast<unsigned>(*day)}};
  if (!ymd.ok()) return std::nullopt;
  const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
  return days * 86400 + hour * 3600 + minute * 60 + second - offset;
}

RecordBatch parse_records(std::istream& in, const Schema& schema, InputFormat format) {
  if (!in) throw Error("input stream is not readable");
  RecordBatch batch;
  std::string line;
  std::vector<std::string> header;
  bool have_format = format != InputFormat::automatic;
  bool expect_header = format == InputFormat::csv;
  std::size_t data_line = 0;

  auto consume = [&](std::optional<SyslogRecord> rec) {
    ++batch.lines_read;
    if (rec) {
      rec->source_line = data_line;
      batch.records.push_back(std::move(*rec));
    } else {
      ++batch.dropped_incomplete;
    }
    ++data_line;
  };

  while (std::getline(in, line)) {
    if (is_blank(line)) continue;
    if (!have_format) {
      format = trim(line).front() == '{' ? InputFormat::json_lines : InputFormat::csv;
      expect_header = format == InputFormat::csv;
      have_format = true;
    }
    if (format == InputFormat::json_lines) {
      consume(parse_json_line(line, schema));
      continue;
    }
    if (expect_header) {
      auto cols = split_csv(line);
      if (!cols) throw Error("malformed CSV header");
      header.clear();
      for (auto& c : *cols) header.emplace_back(trim(c));
      expect_header = false;
      continue;
    }
    auto cells = split_csv(line);
    if (!cells || cells->size() != header.size()) {
      consume(std::nullopt);
      continue;
    }
    consume(build_record(schema, [&](const std::string& key) {
      Cell c;
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == key) {
          c.text = std::string_view((*cells)[i]);
          break;
        }
      }
      return c;
    }));
  }
  if (in.bad()) throw Error("I/O error while reading input");
  std::stable_sort(batch.records.begin(), batch.records.end(),
                   [](const SyslogRecord& a, const SyslogRecord& b) { return a.time < b.time; });
  return batch;
}

RecordBatch read_records(const std::filesystem::path& path, const Schema& schema, InputFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open input file " + path.string());
  if (format == InputFormat::automatic) {
    const auto ext = path.extension().string();
    if (ext == ".csv") format = InputFormat::csv;
    else if (ext == ".jsonl" || ext == ".ndjson") format = InputFormat::json_lines;
  }
  return parse_records(in, schema, format);
}

RecordBatch filter_priority(RecordBatch batch, int threshold) {
  if (threshold < 1 || threshold > 6) throw std::invalid_argument("priority threshold must be in [1, 6]");
  const auto before = batch.records.size();
  std::erase_if(batch.records, [&](const SyslogRecord& r) { return r.priority >= threshold; });
  batch.dropped_priority += before - batch.records.size();
  return batch;
}

RecordBatch sanitize_timestamps(RecordBatch batch, std::int64_t window) {
  if (batch.records.empty()) throw std::invalid_argument("no records to sanitize");
  if (window < 0) throw std::invalid_argument("sanitize window must be non-negative");
  std::vector<std::int64_t> times;
  times.reserve(batch.records.size());
  for (const auto& r : batch.records) times.push_back(r.time);
  const auto n = times.size();
  const auto mid = times.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(times.begin(), mid, times.end());
  double median = static_cast<double>(*mid);
  if (n % 2 == 0) {
    const auto lower = *std::max_element(times.begin(), mid);
    median = (static_cast<double>(lower) + median) / 2.0;
  }
  const auto before = batch.records.size();
  std::erase_if(batch.records, [&](const SyslogRecord& r) {
    return std::abs(static_cast<double>(r.time) - median) > static_cast<double>(window);
  });
  batch.dropped_outlier_time += before - batch.records.size();
  return batch;
}

std::vector<TimeBucket> bucketize(const RecordBatch& batch, std::int64_t width) {
  if (width <= 0) throw std::invalid_argument("bucket width must be positive");
  std::map<std::int64_t, TimeBucket> buckets;
  for (const auto& r : batch.records) {
    std::int64_t start = (r.time / width) * width;
    if (r.time < 0 && r.time % width != 0) start -= width;
    auto& b = buckets[start];
    b.start = start;
    b.width = width;
    b.records.push_back(r);
  }
  std::vector<TimeBucket> out;
  out.reserve(buckets.size());
  for (auto& [start, b] : buckets) out.push_back(std::move(b));
  return out;
}

json drop_summary(const RecordBatch& batch) {
  return json{{"lines_read", batch.lines_read},
              {"retained", batch.records.size()},
              {"dropped_incomplete", batch.dropped_incomplete},
              {"dropped_priority", batch.dropped_priority},
              {"dropped_outlier_time", batch.dropped_outlier_time}};
}

}  // namespace logsentinel
