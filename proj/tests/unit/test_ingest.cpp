#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "logsentinel/error.hpp"
#include "logsentinel/ingest.hpp"

using namespace logsentinel;

namespace {

RecordBatch parse(const std::string& text, const Schema& schema = {}, InputFormat f = InputFormat::automatic) {
  std::istringstream in(text);
  return parse_records(in, schema, f);
}

RecordBatch batch_with_times(std::initializer_list<std::int64_t> times) {
  RecordBatch b;
  for (auto t : times) b.records.push_back({.ip = "10.0.0.1", .time = t, .message = "m", .priority = 3});
  b.lines_read = b.records.size();
  return b;
}

}  // namespace

TEST_CASE("complete line parses to one record") {
  const auto b = parse(R"({"ip":"10.0.0.1","time":1515974400,"message":"link down","priority":3})");
  REQUIRE(b.records.size() == 1);
  CHECK(b.dropped_incomplete == 0);
  CHECK(b.records[0].ip == "10.0.0.1");
  CHECK(b.records[0].time == 1515974400);
  CHECK(b.records[0].message == "link down");
  CHECK(b.records[0].priority == 3);
  CHECK(b.records[0].hostname.empty());
  CHECK_FALSE(b.records[0].facility_num.has_value());
}

TEST_CASE("line missing a required field is dropped and counted") {
  const auto b = parse(R"({"ip":"10.0.0.1","time":1515974400,"priority":3})");
  CHECK(b.records.empty());
  CHECK(b.dropped_incomplete == 1);
  CHECK(b.lines_read == 1);
}

TEST_CASE("ill-typed and out-of-range fields are incomplete, never fatal") {
  const auto b = parse(
      "{\"ip\":\"a\",\"time\":\"yesterday\",\"message\":\"x\",\"priority\":3}\n"
      "{\"ip\":\"a\",\"time\":10,\"message\":\"x\",\"priority\":9}\n"
      "{\"ip\":\"a\",\"time\":10,\"message\":\"\",\"priority\":2}\n"
      "{\"ip\":\"a\",\"time\":0,\"message\":\"x\",\"priority\":2}\n"
      "not json at all\n"
      "{\"ip\":\"a\",\"time\":\"2018-01-15T00:00:00Z\",\"message\":\"ok\",\"priority\":\"2\"}\n");
  CHECK(b.records.size() == 1);
  CHECK(b.dropped_incomplete == 5);
  CHECK(b.records[0].time == 1515974400);
}

TEST_CASE("records come out sorted by time") {
  std::vector<std::int64_t> times{50, 10, 40, 20, 30};
  std::string text;
  for (auto t : times) text += R"({"ip":"i","time":)" + std::to_string(t) + R"(,"message":"m","priority":1})" + "\n";
  const auto b = parse(text);
  REQUIRE(b.records.size() == 5);
  for (std::size_t i = 1; i < 5; ++i) CHECK(b.records[i - 1].time <= b.records[i].time);
  CHECK(b.records.front().source_line == 1);
}

TEST_CASE("csv with header and quoted fields") {
  const auto b = parse(
      "ip,time,message,priority,hostname\n"
      "10.0.0.2,200,\"bgp, neighbor \"\"x\"\" down\",2,r1\n"
      "10.0.0.1,100,plain,4,\n");
  REQUIRE(b.records.size() == 2);
  CHECK(b.records[0].message == "plain");
  CHECK(b.records[1].message == "bgp, neighbor \"x\" down");
  CHECK(b.records[1].hostname == "r1");
}

TEST_CASE("schema presets map source field names") {
  const auto splunk = parse(
      R"({"sender_ip":"1.2.3.4","sender_unixtime":99,"sender_message":"hi","sender_level_num":2,"sender_facility_num":23})",
      Schema::preset("splunk"));
  REQUIRE(splunk.records.size() == 1);
  CHECK(splunk.records[0].facility_num == 23);

  const auto broker = parse("IP,Time,message_words,Priority\n5.6.7.8,77,hello,1\n", Schema::preset("broker"));
  REQUIRE(broker.records.size() == 1);
  CHECK(broker.records[0].ip == "5.6.7.8");
  CHECK_THROWS_AS(Schema::preset("nope"), std::invalid_argument);
}

TEST_CASE("inline schema and severity remap") {
  const auto s = Schema::parse("splunk, message=text, severity_base=0");
  CHECK(s.message == "text");
  CHECK(s.ip == "sender_ip");
  CHECK(s.severity_base == 0);
  // 0-based severities shift onto the 1..5 scale; 5 (Notice) falls outside it.
  const auto b = parse(
      "{\"sender_ip\":\"a\",\"sender_unixtime\":5,\"text\":\"x\",\"sender_level_num\":0}\n"
      "{\"sender_ip\":\"a\",\"sender_unixtime\":5,\"text\":\"x\",\"sender_level_num\":5}\n",
      s);
  REQUIRE(b.records.size() == 1);
  CHECK(b.records[0].priority == 1);
  CHECK(b.dropped_incomplete == 1);
  CHECK(Schema::from_json(s.to_json()).to_json() == s.to_json());
}

TEST_CASE("unreadable stream is fatal") {
  std::istringstream in("x");
  in.setstate(std::ios::badbit);
  CHECK_THROWS_AS(parse_records(in), Error);
  CHECK_THROWS_AS(read_records("/nonexistent/file.jsonl"), Error);
}

TEST_CASE("filter_priority keeps priority below threshold") {
  RecordBatch b;
  for (int p : {1, 3, 4, 5}) b.records.push_back({.ip = "i", .time = 1, .message = "m", .priority = p});
  const auto f = filter_priority(b, 5);
  REQUIRE(f.records.size() == 3);
  CHECK(f.records[0].priority == 1);
  CHECK(f.records[2].priority == 4);
  CHECK(f.dropped_priority == 1);
  CHECK(filter_priority(b, 6).records.size() == 4);
  CHECK(filter_priority(RecordBatch{}, 5).records.empty());
  CHECK_THROWS_AS(filter_priority(b, 0), std::invalid_argument);
  CHECK_THROWS_AS(filter_priority(b, 7), std::invalid_argument);
}

TEST_CASE("sanitize_timestamps drops the misconfigured clocks") {
  RecordBatch b;
  const std::int64_t jan2018 = 1515974400, mar2017 = 1489363200;
  for (int i = 0; i < 100; ++i) b.records.push_back({.ip = "i", .time = jan2018 + i * 60, .message = "m", .priority = 2});
  for (int i = 0; i < 3; ++i) b.records.push_back({.ip = "i", .time = mar2017 + i, .message = "m", .priority = 2});
  const auto s = sanitize_timestamps(b, 86400);
  CHECK(s.records.size() == 100);
  CHECK(s.dropped_outlier_time == 3);

  CHECK(sanitize_timestamps(batch_with_times({7, 7, 7}), 0).dropped_outlier_time == 0);

  RecordBatch edge;
  for (int i = 0; i < 99; ++i) edge.records.push_back({.ip = "i", .time = 1000, .message = "m", .priority = 2});
  edge.records.push_back({.ip = "i", .time = 1000 + 86401, .message = "m", .priority = 2});
  CHECK(sanitize_timestamps(edge).dropped_outlier_time == 1);
  edge.records.back().time = 1000 + 86400;
  CHECK(sanitize_timestamps(edge).dropped_outlier_time == 0);

  CHECK_THROWS_WITH_AS(sanitize_timestamps(RecordBatch{}), "no records to sanitize", std::invalid_argument);
}

TEST_CASE("bucketize aligns to epoch multiples") {
  const auto buckets = bucketize(batch_with_times({0 + 1, 299, 300}), 300);
  REQUIRE(buckets.size() == 2);
  CHECK(buckets[0].start == 0);
  CHECK(buckets[0].records.size() == 2);
  CHECK(buckets[1].start == 300);
  CHECK(buckets[1].records.size() == 1);

  const auto single = bucketize(batch_with_times({1234}), 300);
  REQUIRE(single.size() == 1);
  CHECK(single[0].start == 1200);
  CHECK_THROWS_AS(bucketize(batch_with_times({1}), 0), std::invalid_argument);
}

TEST_CASE("10,000 records spread over 202 windows yield 202 buckets") {
  RecordBatch b;
  const std::int64_t start = 1515974400;  // multiple of 300
  const std::int64_t span = 202 * 300;
  for (std::int64_t i = 0; i < 10000; ++i) b.records.push_back({.ip = "i", .time = start + i * span / 10000, .message = "m", .priority = 2});
  const auto buckets = bucketize(b, 300);
  CHECK(buckets.size() == 202);
}

TEST_CASE("conservation and partition on random input") {
  std::mt19937_64 rng(3);
  std::string text;
  const int lines = 500;
  for (int i = 0; i < lines; ++i) {
    const auto r = rng() % 10;
    const auto t = 1515974400 + static_cast<std::int64_t>(rng() % 5000) - (r == 0 ? 40000000 : 0);
    if (r == 1) text += R"({"ip":"x","message":"m","priority":2})";
    else text += R"({"ip":"x","time":)" + std::to_string(t) + R"(,"message":"m","priority":)" + std::to_string(1 + rng() % 5) + "}";
    text += "\n";
  }
  auto b = parse(text);
  b = filter_priority(std::move(b), 5);
  b = sanitize_timestamps(std::move(b), 86400);
  CHECK(b.records.size() + b.dropped_incomplete + b.dropped_priority + b.dropped_outlier_time == b.lines_read);
  CHECK(b.lines_read == lines);

  const auto buckets = bucketize(b, 300);
  std::size_t total = 0;
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (i > 0) CHECK(buckets[i - 1].start < buckets[i].start);
    for (const auto& r : buckets[i].records) {
      CHECK(r.time >= buckets[i].start);
      CHECK(r.time < buckets[i].start + 300);
    }
    total += buckets[i].records.size();
  }
  CHECK(total == b.records.size());

  auto again = sanitize_timestamps(filter_priority(parse(text), 5), 86400);
  REQUIRE(again.records.size() == b.records.size());
  for (std::size_t i = 0; i < b.records.size(); ++i) CHECK(again.records[i].time == b.records[i].time);
}

TEST_CASE("timestamp parsing") {
  CHECK(parse_timestamp("1515974400") == 1515974400);
  CHECK(parse_timestamp("2018-01-15T00:00:00Z") == 1515974400);
  CHECK(parse_timestamp("2018-01-15 01:00:00+01:00") == 1515974400);
  CHECK(parse_timestamp("2018-01-15T00:00:00.250") == 1515974400);
  CHECK_FALSE(parse_timestamp("2018-02-30T00:00:00").has_value());
  CHECK_FALSE(parse_timestamp("Jan 15").has_value());
  CHECK_FALSE(parse_timestamp("").has_value());
}
