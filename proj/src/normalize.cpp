#include "logsentinel/normalize.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace logsentinel {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_alnum(char c) { return is_digit(c) || is_lower(c) || (c >= 'A' && c <= 'Z'); }
bool is_hex(char c) { return is_digit(c) || (c >= 'a' && c <= 'f'); }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Number of consecutive digits starting at pos, capped at `max + 1`.
std::size_t digit_run(std::string_view s, std::size_t pos, std::size_t max = 32) {
  std::size_t n = 0;
  while (pos + n < s.size() && is_digit(s[pos + n]) && n <= max) ++n;
  return n;
}

// A literal must not be glued to surrounding word characters.
bool left_boundary(std::string_view s, std::size_t pos) {
  return pos == 0 || !(is_alnum(s[pos - 1]) || s[pos - 1] == '.' || s[pos - 1] == ':');
}
bool right_boundary(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return true;
  if (is_alnum(s[pos]) || s[pos] == ':') return false;
  // "1.2.3.4." at the end of a sentence is fine, "1.2.3.4.5" is not.
  if (s[pos] == '.' && pos + 1 < s.size() && is_alnum(s[pos + 1])) return false;
  return true;
}

// Each matcher returns the length of the literal starting at pos (0 = none).
using Matcher = std::size_t (*)(std::string_view, std::size_t);

std::size_t match_ipv4_body(std::string_view s, std::size_t pos) {
  std::size_t p = pos;
  for (int octet = 0; octet < 4; ++octet) {
    const auto n = digit_run(s, p, 3);
    if (n == 0 || n > 3) return 0;
    int v = 0;
    for (std::size_t i = 0; i < n; ++i) v = v * 10 + (s[p + i] - '0');
    if (v > 255) return 0;
    p += n;
    if (octet < 3) {
      if (p >= s.size() || s[p] != '.') return 0;
      ++p;
    }
  }
  // Optional CIDR suffix.
  if (p < s.size() && s[p] == '/') {
    const auto n = digit_run(s, p + 1, 2);
    if (n >= 1 && n <= 2) p += 1 + n;
  }
  return p - pos;
}

std::size_t match_ipv4(std::string_view s, std::size_t pos) {
  if (!is_digit(s[pos]) || !left_boundary(s, pos)) return 0;
  const auto n = match_ipv4_body(s, pos);
  return n != 0 && right_boundary(s, pos + n) ? n : 0;
}

std::size_t match_ipv6(std::string_view s, std::size_t pos) {
  if (!(is_hex(s[pos]) || s[pos] == ':') || !left_boundary(s, pos)) return 0;
  std::size_t end = pos;
  while (end < s.size() && (is_hex(s[end]) || s[end] == ':')) ++end;
  // Embedded IPv4 tail (::ffff:10.0.0.1): the hex run stops at the first '.',
  // so back up to the last colon and try a dotted quad from there.
  std::size_t v4 = 0;
  if (end < s.size() && s[end] == '.') {
    const auto colon = s.rfind(':', end);
    if (colon == std::string_view::npos || colon < pos) return 0;
    v4 = match_ipv4_body(s, colon + 1);
    if (v4 == 0) return 0;
    end = colon + 1;
  }
  const std::string_view cand = s.substr(pos, end - pos);
  const auto dbl = cand.find("::");
  if (dbl != std::string_view::npos && cand.find("::", dbl + 1) != std::string_view::npos) return 0;
  if (cand.find(":::") != std::string_view::npos) return 0;
  std::size_t groups = 0, colons = 0;
  std::size_t run = 0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (cand[i] == ':') {
      ++colons;
      if (run > 0) ++groups;
      if (run > 4) return 0;
      run = 0;
    } else {
      ++run;
    }
  }
  if (run > 4) return 0;
  if (run > 0) ++groups;
  if (v4 != 0) groups += 2;
  if (colons < 2) return 0;
  if (dbl == std::string_view::npos) {
    // Uncompressed form needs all eight groups and no stray colon at the ends.
    if (groups != 8 || cand.front() == ':' || (cand.back() == ':' && v4 == 0)) return 0;
  } else {
    if (groups > 7) return 0;
    if (cand.front() == ':' && dbl != 0) return 0;
    if (v4 == 0 && cand.back() == ':' && dbl + 2 != cand.size()) return 0;
  }
  const auto len = cand.size() + v4;
  return right_boundary(s, pos + len) ? len : 0;
}

std::size_t match_time(std::string_view s, std::size_t pos) {
  if (!is_digit(s[pos]) || !left_boundary(s, pos)) return 0;
  const auto h = digit_run(s, pos, 2);
  if (h == 0 || h > 2) return 0;
  std::size_t p = pos + h;
  int fields = 1;
  while (fields < 3 && p < s.size() && s[p] == ':' && digit_run(s, p + 1, 2) == 2) {
    p += 3;
    ++fields;
  }
  if (fields < 2) return 0;
  if (p < s.size() && s[p] == '.' && digit_run(s, p + 1) > 0) p += 1 + digit_run(s, p + 1);
  return right_boundary(s, p) ? p - pos : 0;
}

constexpr std::array<std::string_view, 24> kMonths = {
    "january", "february", "march", "april", "may", "june", "july", "august",
    "september", "october", "november", "december", "jan", "feb", "mar", "apr",
    "jun", "jul", "aug", "sept", "sep", "oct", "nov", "dec"};

std::size_t match_month(std::string_view s, std::size_t pos) {
  if (!left_boundary(s, pos)) return 0;
  for (auto m : kMonths) {
    if (s.substr(pos, m.size()) == m) {
      const auto e = pos + m.size();
      if (e < s.size() && is_alnum(s[e])) continue;
      if (e < s.size() && s[e] == '.') return m.size() + 1;
      return m.size();
    }
  }
  return 0;
}

// Skips spaces and a single comma; returns new position.
std::size_t skip_sep(std::string_view s, std::size_t p) {
  while (p < s.size() && s[p] == ' ') ++p;
  if (p < s.size() && s[p] == ',') ++p;
  while (p < s.size() && s[p] == ' ') ++p;
  return p;
}

std::size_t match_day(std::string_view s, std::size_t p) {
  const auto n = digit_run(s, p, 2);
  if (n == 0 || n > 2) return 0;
  std::size_t e = p + n;
  // ordinal suffixes
  for (std::string_view suf : {"st", "nd", "rd", "th"}) {
    if (s.substr(e, 2) == suf) {
      e += 2;
      break;
    }
  }
  return e < s.size() && is_alnum(s[e]) ? 0 : e - p;
}

std::size_t match_year(std::string_view s, std::size_t p) {
  const auto n = digit_run(s, p, 4);
  return n == 4 && (p + 4 >= s.size() || !is_alnum(s[p + 4])) ? 4 : 0;
}

std::size_t match_date(std::string_view s, std::size_t pos) {
  if (!left_boundary(s, pos)) return 0;
  if (is_digit(s[pos])) {
    // YYYY-MM-DD or YYYY/MM/DD, optionally followed by a 'T'-joined time.
    if (digit_run(s, pos, 4) == 4 && pos + 10 <= s.size() && (s[pos + 4] == '-' || s[pos + 4] == '/') &&
        s[pos + 7] == s[pos + 4] && digit_run(s, pos + 5, 2) == 2 && digit_run(s, pos + 8, 2) == 2) {
      std::size_t e = pos + 10;
      if (e < s.size() && s[e] == 't') {
        std::size_t q = e + 1;
        if (digit_run(s, q, 2) == 2 && q + 5 <= s.size() && s[q + 2] == ':' && digit_run(s, q + 3, 2) == 2) {
          q += 5;
          if (q + 3 <= s.size() && s[q] == ':' && digit_run(s, q + 1, 2) == 2) q += 3;
          if (q < s.size() && s[q] == '.') q += 1 + digit_run(s, q + 1);
          if (q < s.size() && s[q] == 'z') {
            ++q;
          } else if (q + 6 <= s.size() && (s[q] == '+' || s[q] == '-') && digit_run(s, q + 1, 2) == 2 &&
                     s[q + 3] == ':' && digit_run(s, q + 4, 2) == 2) {
            q += 6;
          }
          e = q;
        }
      }
      return right_boundary(s, e) ? e - pos : 0;
    }
    // MM/DD/YYYY or MM-DD-YYYY
    const auto m = digit_run(s, pos, 2);
    if (m >= 1 && m <= 2) {
      std::size_t p = pos + m;
      if (p < s.size() && (s[p] == '/' || s[p] == '-')) {
        const char sep = s[p];
        const auto d = digit_run(s, p + 1, 2);
        if (d >= 1 && d <= 2 && p + 1 + d < s.size() && s[p + 1 + d] == sep) {
          const auto y = digit_run(s, p + 2 + d, 4);
          if (y == 4 || y == 2) {
            const auto e = p + 2 + d + y;
            if (right_boundary(s, e)) return e - pos;
          }
        }
      }
    }
    // DD Month [YYYY]
    if (const auto d = match_day(s, pos); d > 0) {
      std::size_t p = pos + d;
      while (p < s.size() && (s[p] == ' ' || s[p] == '-')) ++p;
      if (p < s.size() && p > pos + d) {
        if (const auto mo = match_month(s, p); mo > 0) {
          std::size_t e = p + mo;
          std::size_t q = e;
          while (q < s.size() && (s[q] == ' ' || s[q] == '-' || s[q] == ',')) ++q;
          if (q < s.size() && q > e) {
            if (const auto y = match_year(s, q); y > 0) e = q + y;
          }
          return e - pos;
        }
      }
    }
    return 0;
  }
  // Month DD[,] [YYYY]
  if (const auto mo = match_month(s, pos); mo > 0) {
    std::size_t p = pos + mo;
    const std::size_t sep = skip_sep(s, p);
    if (sep == p || sep >= s.size()) return 0;
    const auto d = match_day(s, sep);
    if (d == 0) return 0;
    std::size_t e = sep + d;
    const std::size_t ysep = skip_sep(s, e);
    if (ysep > e && ysep < s.size()) {
      if (const auto y = match_year(s, ysep); y > 0) e = ysep + y;
    }
    return e - pos;
  }
  return 0;
}

// Replaces every literal found by `match` with a single space.
std::string strip(std::string_view s, Matcher match) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto n = match(s, i);
    if (n > 0) {
      out.push_back(' ');
      i += n;
    } else {
      out.push_back(s[i]);
      ++i;
    }
  }
  return out;
}

bool is_word_at(std::string_view s, std::size_t pos, std::string_view word) {
  if (s.substr(pos, word.size()) != word) return false;
  if (pos > 0 && is_alnum(s[pos - 1])) return false;
  const auto e = pos + word.size();
  return e >= s.size() || !is_alnum(s[e]);
}

std::string strip_usernames(std::string_view s, const std::vector<std::string>& keywords) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const std::string* hit = nullptr;
    for (const auto& kw : keywords) {
      if (!kw.empty() && is_word_at(s, i, kw)) {
        hit = &kw;
        break;
      }
    }
    if (hit == nullptr) {
      out.push_back(s[i++]);
      continue;
    }
    out.append(*hit);
    i += hit->size();
    std::size_t p = i;
    while (p < s.size() && (is_space(s[p]) || s[p] == ':' || s[p] == '=')) ++p;
    std::size_t e = p;
    bool plain = true;
    while (e < s.size() && !is_space(s[e])) {
      if (!is_lower(s[e])) plain = false;
      ++e;
    }
    // Pure lowercase words survive.
    if (e > p && !plain) {
      out.push_back(' ');
      i = e;
    }
  }
  return out;
}

}  // namespace

std::string normalize_message(std::string_view raw, const NormalizerOptions& options) {
  std::string s(raw);
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  s = strip(s, match_ipv6);
  s = strip(s, match_ipv4);
  s = strip(s, match_date);
  s = strip(s, match_time);
  s = strip_usernames(s, options.user_keywords);

  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_digit(c)) continue;
    if (is_lower(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    } else {
      pending_space = true;
    }
  }
  if (out.size() > options.max_length) {
    const bool cut_inside_word = out[options.max_length] != ' ';
    out.resize(options.max_length);
    if (cut_inside_word) {
      const auto sp = out.rfind(' ');
      out.resize(sp == std::string::npos ? 0 : sp);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
  }
  return out;
}

std::optional<int> TemplateTable::id_of(std::string_view text) const {
  if (auto it = index_.find(std::string(text)); it != index_.end()) return it->second;
  return std::nullopt;
}

int TemplateTable::observe(std::string_view text) {
  ++total_;
  auto [it, inserted] = index_.try_emplace(std::string(text), static_cast<int>(templates_.size()));
  if (inserted) templates_.push_back(Template{it->second, std::string(text), 0});
  ++templates_[static_cast<std::size_t>(it->second)].count;
  return it->second;
}

std::vector<std::size_t> TemplateTable::counts() const {
  std::vector<std::size_t> out;
  out.reserve(templates_.size());
  for (const auto& t : templates_) out.push_back(t.count);
  return out;
}

nlohmann::json TemplateTable::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : templates_) arr.push_back({{"id", t.id}, {"text", t.text}, {"count", t.count}});
  nlohmann::json j{{"templates", arr}, {"total", total_}, {"collapsed", collapsed_}};
  j["other_id"] = other_id_ ? nlohmann::json(*other_id_) : nlohmann::json(nullptr);
  return j;
}

TemplateTable TemplateTable::from_json(const nlohmann::json& j) {
  TemplateTable t;
  for (const auto& e : j.at("templates")) {
    Template tpl{e.at("id").get<int>(), e.at("text").get<std::string>(), e.at("count").get<std::size_t>()};
    if (tpl.id != static_cast<int>(t.templates_.size())) throw std::invalid_argument("template ids must be dense");
    t.index_.emplace(tpl.text, tpl.id);
    t.total_ += tpl.count;
    t.templates_.push_back(std::move(tpl));
  }
  if (j.contains("other_id") && !j["other_id"].is_null()) t.other_id_ = j["other_id"].get<int>();
  if (j.contains("collapsed")) {
    t.collapsed_ = j["collapsed"].get<std::vector<std::string>>();
    if (!t.other_id_ && !t.collapsed_.empty()) throw std::invalid_argument("collapsed texts without OTHER id");
    for (const auto& text : t.collapsed_) t.index_.emplace(text, *t.other_id_);
  }
  if (j.contains("total") && j["total"].get<std::size_t>() != t.total_) {
    throw std::invalid_argument("template counts do not sum to total");
  }
  return t;
}

TemplateTable mine_templates(std::span<const std::string> messages) {
  TemplateTable table;
  for (const auto& m : messages) table.observe(m);
  return table;
}

TemplateTable collapse_rare(const TemplateTable& table, double min_frac) {
  if (!(min_frac >= 0.0 && min_frac < 1.0)) throw std::invalid_argument("min_frac must be in [0, 1)");
  TemplateTable out;
  out.total_ = table.total_;
  out.collapsed_ = table.collapsed_;
  std::size_t other_count = 0;
  std::vector<std::string> rare;
  const double total = static_cast<double>(table.total_);
  for (const auto& t : table.templates_) {
    const bool is_other = table.other_id_ && t.id == *table.other_id_;
    if (is_other || static_cast<double>(t.count) / total <= min_frac) {
      other_count += t.count;
      if (!is_other) rare.push_back(t.text);
      continue;
    }
    const int id = static_cast<int>(out.templates_.size());
    out.templates_.push_back(Template{id, t.text, t.count});
    out.index_.emplace(t.text, id);
  }
  const bool had_other = table.other_id_.has_value();
  if (!rare.empty() || had_other) {
    const int id = static_cast<int>(out.templates_.size());
    out.templates_.push_back(Template{id, std::string(TemplateTable::kOtherText), other_count});
    out.other_id_ = id;
    out.index_.emplace(std::string(TemplateTable::kOtherText), id);
    for (auto& text : rare) out.collapsed_.push_back(std::move(text));
    for (const auto& text : out.collapsed_) out.index_[text] = id;
  }
  return out;
}

}  // namespace logsentinel
