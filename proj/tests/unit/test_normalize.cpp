#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "logsentinel/normalize.hpp"

using namespace logsentinel;

namespace {

bool charset_ok(const std::string& s) {
  for (char c : s)
    if (!((c >= 'a' && c <= 'z') || c == ' ')) return false;
  if (!s.empty() && (s.front() == ' ' || s.back() == ' ')) return false;
  return s.find("  ") == std::string::npos;
}

std::string fuzz_case(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {
      "user", "User", " ", "10.1.2.3", "fe80::1", "2001:db8::ff00:42:8329", "::", ":::", "12:03:45", "23:59",
      "2018-01-15", "01/15/2018", "Jan 15 2018", "15 March 2018", "admin42", "root", "-", "/", ".", "\t",
      "interface", "ge-0/0/1", "DOWN", "%", "\xff", "\x01", "é", "0", "999999", "::ffff:10.0.0.1", "10.0.0.0/24",
      "2018-01-15T10:00:00Z", "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa", "user user", "a:b:c"};
  std::string s;
  const auto n = rng() % 14;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng() % 4 == 0) {
      s += static_cast<char>(rng() % 256);
    } else {
      s += pieces[rng() % pieces.size()];
      if (rng() % 2) s += ' ';
    }
  }
  return s;
}

}  // namespace

TEST_CASE("hand-applied normalization examples") {
  CHECK(normalize_message("Interface ge-0/0/1 DOWN at 12:03:45 from 10.1.2.3") == "interface ge down at from");
  CHECK(normalize_message("") == "");
  CHECK(normalize_message("login failure for user admin42 from fe80::1") == "login failure for user from");
}

TEST_CASE("volatile token classes are removed") {
  CHECK(normalize_message("Link up on 2018-01-15 at 23:59") == "link up on at");
  CHECK(normalize_message("reboot scheduled 01/15/2018") == "reboot scheduled");
  CHECK(normalize_message("reboot scheduled Jan 15 2018 now") == "reboot scheduled now");
  CHECK(normalize_message("peer 2001:db8::ff00:42:8329 reset") == "peer reset");
  CHECK(normalize_message("peer ::ffff:10.0.0.1 reset") == "peer reset");
  CHECK(normalize_message("route 10.0.0.0/24 withdrawn") == "route withdrawn");
  CHECK(normalize_message("event at 2018-01-15T10:00:00Z done") == "event at done");
  CHECK(normalize_message("CPU 97% busy") == "cpu busy");
}

TEST_CASE("username heuristic") {
  CHECK(normalize_message("session closed for user jdoe7") == "session closed for user");
  CHECK(normalize_message("user svc_backup logged in") == "user logged in");
  // A plain word after the keyword cannot be told apart from vocabulary and stays.
  CHECK(normalize_message("user from host") == "user from host");
  NormalizerOptions opts;
  opts.user_keywords = {"user", "login"};
  CHECK(normalize_message("login ops_1 accepted", opts) == "login accepted");
}

TEST_CASE("truncation keeps whole words within 50 characters") {
  const std::string raw =
      "the quick brown fox jumps over the lazy dog and keeps running far away";
  const auto n = normalize_message(raw);
  CHECK(n.size() <= 50);
  CHECK(n == "the quick brown fox jumps over the lazy dog and");
  CHECK(normalize_message(std::string(80, 'a')) == "");
  NormalizerOptions opts;
  opts.max_length = 10;
  CHECK(normalize_message("abcde fghij klm", opts) == "abcde");
}

TEST_CASE("fuzz: idempotence, length, digits, charset") {
  std::mt19937_64 rng(20180115);
  for (int i = 0; i < 10000; ++i) {
    const auto raw = fuzz_case(rng);
    const auto once = normalize_message(raw);
    CAPTURE(raw);
    REQUIRE(once.size() <= 50);
    REQUIRE(charset_ok(once));
    REQUIRE(normalize_message(once) == once);
  }
}

TEST_CASE("mine_templates counts and orders by first sight") {
  const std::vector<std::string> msgs{"a b", "a b", "c"};
  const auto t = mine_templates(msgs);
  REQUIRE(t.size() == 2);
  CHECK(t.templates()[0].text == "a b");
  CHECK(t.templates()[0].count == 2);
  CHECK(t.templates()[1].id == 1);
  CHECK(t.templates()[1].count == 1);
  CHECK(t.total() == 3);
  CHECK(t.id_of("c") == 1);
  CHECK_FALSE(t.id_of("zzz").has_value());

  const auto empty = mine_templates(std::vector<std::string>{});
  CHECK(empty.size() == 0);
  CHECK(empty.total() == 0);
}

TEST_CASE("messages differing only in an address share a template") {
  const std::vector<std::string> msgs{normalize_message("BGP peer 10.0.0.1 down"), normalize_message("BGP peer 192.168.7.200 down")};
  const auto t = mine_templates(msgs);
  CHECK(t.size() == 1);
  CHECK(t.id_of(msgs[1]) == 0);
}

TEST_CASE("collapse_rare merges at or below the threshold") {
  std::vector<std::string> msgs;
  for (int i = 0; i < 96; ++i) msgs.emplace_back("a");
  for (int i = 0; i < 3; ++i) msgs.emplace_back("b");
  msgs.emplace_back("c");
  const auto t = collapse_rare(mine_templates(msgs), 0.01);
  REQUIRE(t.size() == 3);
  CHECK(t.templates()[0].text == "a");
  CHECK(t.templates()[0].count == 96);
  CHECK(t.templates()[1].text == "b");
  CHECK(t.templates()[2].text == TemplateTable::kOtherText);
  CHECK(t.templates()[2].count == 1);
  CHECK(t.other_id() == 2);
  CHECK(t.id_of("c") == 2);
  CHECK(t.total() == 100);

  const auto same = collapse_rare(mine_templates(msgs), 0.0);
  CHECK(same.size() == 3);
  CHECK_FALSE(same.other_id().has_value());
  CHECK_THROWS_AS(collapse_rare(mine_templates(msgs), 1.0), std::invalid_argument);
}

TEST_CASE("5 of 1,288 templates above 1% collapse to 6 classes") {
  std::vector<std::string> msgs;
  // Five frequent templates at 15% each, 1,283 rare ones sharing the rest.
  const int total = 100000;
  for (int f = 0; f < 5; ++f)
    for (int i = 0; i < 15000; ++i) msgs.push_back("frequent " + std::string(1, static_cast<char>('a' + f)));
  for (int i = 0; static_cast<int>(msgs.size()) < total; ++i) {
    const int id = i % 1283;
    std::string text = "rare ";
    for (int v = id, d = 0; d < 3; ++d, v /= 26) text += static_cast<char>('a' + v % 26);
    msgs.push_back(text);
  }
  const auto mined = mine_templates(msgs);
  CHECK(mined.size() == 1288);
  const auto collapsed = collapse_rare(mined, 0.01);
  CHECK(collapsed.size() == 6);
  CHECK(collapsed.total() == mined.total());
}

TEST_CASE("collapse_rare conserves counts and never merges above the threshold") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> msgs;
    const auto n = 1 + rng() % 400;
    for (std::size_t i = 0; i < n; ++i) msgs.push_back(std::string(1, static_cast<char>('a' + rng() % 20)) + "x");
    const auto mined = mine_templates(msgs);
    const double frac = static_cast<double>(rng() % 100) / 1000.0;
    const auto c = collapse_rare(mined, frac);
    CHECK(c.total() == mined.total());
    std::size_t sum = 0;
    for (const auto& t : c.templates()) sum += t.count;
    CHECK(sum == mined.total());
    for (const auto& t : mined.templates()) {
      if (static_cast<double>(t.count) / static_cast<double>(mined.total()) > frac) {
        const auto id = c.id_of(t.text);
        REQUIRE(id.has_value());
        CHECK(c.templates()[static_cast<std::size_t>(*id)].text == t.text);
      }
    }
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.templates()[i].id == static_cast<int>(i));
  }
}

TEST_CASE("template table json round trip") {
  std::vector<std::string> msgs{"a", "a", "b", "c"};
  for (int i = 0; i < 100; ++i) msgs.emplace_back("a");
  const auto t = collapse_rare(mine_templates(msgs), 0.01);
  const auto back = TemplateTable::from_json(t.to_json());
  CHECK(back.to_json() == t.to_json());
  CHECK(back.id_of("b") == t.id_of("b"));
  CHECK(back.other_id() == t.other_id());
}
