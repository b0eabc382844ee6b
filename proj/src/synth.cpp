#include "logsentinel/synth.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>

#include "logsentinel/error.hpp"
#include "logsentinel/normalize.hpp"

namespace logsentinel {

namespace {

TemplateSpec periodic(std::string text, int priority = 4) {
  return {std::move(text), TemplateRole::periodic, priority};
}
TemplateSpec spontaneous(std::string text, int priority) {
  return {std::move(text), TemplateRole::spontaneous, priority};
}
TemplateSpec consequence(std::string text, int priority) {
  return {std::move(text), TemplateRole::consequence, priority};
}

const char* role_name(TemplateRole r) {
  switch (r) {
    case TemplateRole::periodic: return "periodic";
    case TemplateRole::spontaneous: return "spontaneous";
    case TemplateRole::consequence: return "consequence";
  }
  return "periodic";
}

TemplateRole role_from(const std::string& s) {
  if (s == "periodic") return TemplateRole::periodic;
  if (s == "spontaneous") return TemplateRole::spontaneous;
  if (s == "consequence") return TemplateRole::consequence;
  throw Error("unknown template role: " + s);
}

class SlotFiller {
 public:
  explicit SlotFiller(std::mt19937_64& rng) : rng_(rng) {}

  std::string fill(const std::string& text) {
    std::string out;
    out.reserve(text.size() + 16);
    std::size_t i = 0;
    while (i < text.size()) {
      if (text[i] == '{') {
        const auto close = text.find('}', i);
        if (close != std::string::npos) {
          out += value(text.substr(i + 1, close - i - 1));
          i = close + 1;
          continue;
        }
      }
      out += text[i++];
    }
    return out;
  }

 private:
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  std::string two(int v) { return (v < 10 ? "0" : "") + std::to_string(v); }

  std::string value(const std::string& slot) {
    if (slot == "INT") return std::to_string(uniform(0, 9999));
    if (slot == "IP") {
      if (uniform(0, 4) == 0) {
        static constexpr char hex[] = "0123456789abcdef";
        std::string v6 = "2001:db8:";
        for (int g = 0; g < 2; ++g) {
          v6 += ':';
          for (int c = 0; c < 4; ++c) v6 += hex[uniform(0, 15)];
        }
        return v6;
      }
      return std::to_string(uniform(1, 223)) + "." + std::to_string(uniform(0, 255)) + "." +
             std::to_string(uniform(0, 255)) + "." + std::to_string(uniform(1, 254));
    }
    if (slot == "TIME") return two(uniform(0, 23)) + ":" + two(uniform(0, 59)) + ":" + two(uniform(0, 59));
    if (slot == "DATE") return std::to_string(uniform(2015, 2019)) + "-" + two(uniform(1, 12)) + "-" + two(uniform(1, 28));
    if (slot == "USER") {
      static const char* names[] = {"jdoe", "admin", "netops", "asmith", "oper", "svc_backup", "mlee", "root"};
      return std::string(names[uniform(0, 7)]) + std::to_string(uniform(1, 99));
    }
    throw Error("unknown template slot: {" + slot + "}");
  }

  std::mt19937_64& rng_;
};

std::string blank_slots(const std::string& text) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const auto close = text.find('}', i);
      if (close != std::string::npos) {
        out += ' ';
        i = close + 1;
        continue;
      }
    }
    out += text[i++];
  }
  return out;
}

}  // namespace

SynthConfig SynthConfig::cascade_basic() {
  SynthConfig c;
  c.families = {
      {"link",
       {periodic("Interface ge-{INT}/{INT}/{INT} input errors polled at {TIME}"),
        periodic("LLDP neighbor table refreshed on port {INT}"),
        periodic("Optical power check passed on xe-{INT}/{INT}/{INT}"),
        spontaneous("Interface ge-{INT}/{INT}/{INT} changed state to down", 3),
        consequence("LACP member ge-{INT}/{INT}/{INT} removed from bundle ae{INT}", 3)},
       0.012},
      {"routing",
       {periodic("BGP keepalive received from neighbor {IP}"),
        periodic("OSPF hello sent on area {INT} at {TIME}"),
        periodic("Route table checksum verified, {INT} prefixes"),
        periodic("MPLS LSP path reoptimization check on {DATE}"),
        spontaneous("BGP session reset by peer {IP}", 3)},
       0.012},
      {"hardware",
       {periodic("Chassis temperature sensor {INT} reading normal"),
        periodic("EEPROM read completed for slot {INT}"),
        periodic("Memory utilization sampled at {TIME} on {DATE}"),
        spontaneous("Power supply {INT} failure detected", 2),
        consequence("Fan tray {INT} speed critical", 2)},
       0.012},
      {"auth",
       {periodic("SSH keepalive from {IP} on session {INT}"),
        periodic("TACACS server {IP} reachable"),
        periodic("NTP synchronized to {IP} at {TIME}"),
        spontaneous("Login failure for user {USER} from {IP}", 4),
        consequence("Account locked for user {USER} after {INT} attempts", 4)},
       0.012},
  };
  c.rules = {{3, 4, 1, 1.0}, {13, 14, 2, 1.0}, {18, 19, 3, 1.0}};
  c.noise_templates = {
      "Config archive {INT} written by user {USER}",
      "SNMP poll from {IP} answered in {INT} ms",
      "Syslog rate limiter dropped {INT} messages",
      "CLI command executed by user {USER} at {TIME}",
      "DHCP lease renewed for {IP}",
      "Cron job {INT} completed on {DATE}",
  };
  return c;
}

std::size_t SynthConfig::template_count() const {
  std::size_t n = 0;
  for (const auto& f : families) n += f.templates.size();
  return n;
}

const TemplateSpec& SynthConfig::template_at(int id) const {
  int base = 0;
  for (const auto& f : families) {
    if (id >= base && id < base + static_cast<int>(f.templates.size())) return f.templates[id - base];
    base += static_cast<int>(f.templates.size());
  }
  throw std::out_of_range("template id out of range: " + std::to_string(id));
}

int SynthConfig::family_of(int id) const {
  int base = 0;
  for (std::size_t fi = 0; fi < families.size(); ++fi) {
    const int n = static_cast<int>(families[fi].templates.size());
    if (id >= base && id < base + n) return static_cast<int>(fi);
    base += n;
  }
  throw std::out_of_range("template id out of range: " + std::to_string(id));
}

void SynthConfig::validate() const {
  if (families.empty()) throw std::invalid_argument("synth: at least one event family is required");
  if (total_messages == 0) throw std::invalid_argument("synth: total_messages must be positive");
  if (!(noise_fraction >= 0.0 && noise_fraction < 1.0))
    throw std::invalid_argument("synth: noise_fraction must be in [0, 1)");
  if (noise_fraction > 0.0 && noise_templates.empty())
    throw std::invalid_argument("synth: noise_fraction > 0 needs noise templates");
  if (noise_priority < 1 || noise_priority > 5) throw std::invalid_argument("synth: noise_priority must be in [1, 5]");
  if (time_span < 0) throw std::invalid_argument("synth: time_span must be non-negative");
  if (router_count < 1) throw std::invalid_argument("synth: router_count must be positive");
  double rate_sum = 0.0;
  bool any_periodic = false;
  bool any_spontaneous = false;
  for (const auto& f : families) {
    if (f.templates.empty()) throw std::invalid_argument("synth: family '" + f.name + "' has no templates");
    if (!(f.base_rate >= 0.0 && f.base_rate <= 1.0))
      throw std::invalid_argument("synth: base_rate of '" + f.name + "' must be in [0, 1]");
    bool has_spont = false;
    for (const auto& t : f.templates) {
      if (t.priority < 1 || t.priority > 5) throw std::invalid_argument("synth: template priority must be in [1, 5]");
      any_periodic |= t.role == TemplateRole::periodic;
      has_spont |= t.role == TemplateRole::spontaneous;
    }
    if (has_spont) {
      rate_sum += f.base_rate;
      any_spontaneous |= f.base_rate > 0.0;
    }
  }
  if (rate_sum > 1.0) throw std::invalid_argument("synth: spontaneous base rates sum above 1");
  if (!any_periodic && !any_spontaneous)
    throw std::invalid_argument("synth: need a periodic template or a spontaneous one with a positive rate");
  const int n = static_cast<int>(template_count());
  for (const auto& r : rules) {
    if (r.trigger < 0 || r.trigger >= n || r.consequence < 0 || r.consequence >= n)
      throw std::invalid_argument("synth: cascade rule references unknown template id");
    if (r.lag < 1) throw std::invalid_argument("synth: cascade lag must be at least 1");
    if (!(r.probability >= 0.0 && r.probability <= 1.0))
      throw std::invalid_argument("synth: cascade probability must be in [0, 1]");
  }
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json fams = nlohmann::json::array();
  for (const auto& f : families) {
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : f.templates) ts.push_back({{"text", t.text}, {"role", role_name(t.role)}, {"priority", t.priority}});
    fams.push_back({{"name", f.name}, {"base_rate", f.base_rate}, {"templates", ts}});
  }
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rules)
    rs.push_back({{"trigger", r.trigger}, {"consequence", r.consequence}, {"lag", r.lag}, {"probability", r.probability}});
  return {{"families", fams},
          {"rules", rs},
          {"noise_templates", noise_templates},
          {"noise_priority", noise_priority},
          {"total_messages", total_messages},
          {"noise_fraction", noise_fraction},
          {"start_time", start_time},
          {"time_span", time_span},
          {"router_count", router_count},
          {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  try {
    SynthConfig c = j.contains("families") ? SynthConfig{} : cascade_basic();
    if (j.contains("families")) {
      for (const auto& f : j.at("families")) {
        EventFamily fam{f.at("name").get<std::string>(), {}, f.value("base_rate", 0.01)};
        for (const auto& t : f.at("templates"))
          fam.templates.push_back(
              {t.at("text").get<std::string>(), role_from(t.value("role", "periodic")), t.value("priority", 4)});
        c.families.push_back(std::move(fam));
      }
      c.rules.clear();
      c.noise_templates.clear();
    }
    if (j.contains("rules")) {
      c.rules.clear();
      for (const auto& r : j.at("rules"))
        c.rules.push_back({r.at("trigger").get<int>(), r.at("consequence").get<int>(), r.value("lag", 1),
                           r.value("probability", 1.0)});
    }
    if (j.contains("noise_templates")) c.noise_templates = j.at("noise_templates").get<std::vector<std::string>>();
    c.noise_priority = j.value("noise_priority", c.noise_priority);
    c.total_messages = j.value("total_messages", c.total_messages);
    c.noise_fraction = j.value("noise_fraction", c.noise_fraction);
    c.start_time = j.value("start_time", c.start_time);
    c.time_span = j.value("time_span", c.time_span);
    c.router_count = j.value("router_count", c.router_count);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("synth config: ") + e.what());
  }
}

nlohmann::json GroundTruth::to_json() const {
  nlohmann::json es = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json o = {{"family", e.family}, {"template", e.template_id}, {"noise", e.noise}};
    o["parent"] = e.parent ? nlohmann::json(*e.parent) : nlohmann::json(nullptr);
    es.push_back(std::move(o));
  }
  return {{"format", "logsentinel.ground_truth"}, {"version", 1}, {"families", family_names}, {"records", es}};
}

GroundTruth GroundTruth::from_json(const nlohmann::json& j) {
  try {
    GroundTruth g;
    g.family_names = j.at("families").get<std::vector<std::string>>();
    for (const auto& o : j.at("records")) {
      GroundTruthEntry e;
      e.family = o.at("family").get<int>();
      e.template_id = o.at("template").get<int>();
      e.noise = o.value("noise", false);
      if (!o.at("parent").is_null()) e.parent = o.at("parent").get<std::size_t>();
      g.entries.push_back(e);
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("ground truth: ") + e.what());
  }
}

SynthOutput generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  SlotFiller filler(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> router_dist(0, config.router_count - 1);

  const int n_family_templates = static_cast<int>(config.template_count());
  std::vector<int> cycle;
  std::vector<std::vector<int>> spont(config.families.size());
  {
    int id = 0;
    for (std::size_t f = 0; f < config.families.size(); ++f)
      for (const auto& t : config.families[f].templates) {
        if (t.role == TemplateRole::periodic) cycle.push_back(id);
        if (t.role == TemplateRole::spontaneous) spont[f].push_back(id);
        ++id;
      }
  }
  double rate_sum = 0.0;
  for (std::size_t f = 0; f < spont.size(); ++f)
    if (!spont[f].empty()) rate_sum += config.families[f].base_rate;

  struct Pending {
    int template_id;
    std::size_t parent;
    int router;
  };
  std::map<std::size_t, std::deque<Pending>> pending;

  SynthOutput out;
  out.truth.family_names.reserve(config.families.size() + 1);
  for (const auto& f : config.families) out.truth.family_names.push_back(f.name);
  out.truth.family_names.push_back("noise");
  const int noise_family = static_cast<int>(config.families.size());

  auto& records = out.batch.records;
  records.reserve(config.total_messages);
  out.truth.entries.reserve(config.total_messages);

  auto emit = [&](std::size_t i, const std::string& text, int priority, int router, GroundTruthEntry truth) {
    SyslogRecord r;
    r.ip = "10.0." + std::to_string(router / 250) + "." + std::to_string(router % 250 + 1);
    r.hostname = "rtr" + std::to_string(router) + ".example.net";
    const auto total = static_cast<__int128>(config.total_messages);
    r.time = config.start_time + static_cast<std::int64_t>(static_cast<__int128>(i) * config.time_span / total);
    r.message = filler.fill(text);
    r.priority = priority;
    r.vendor = "synthetic";
    r.source_line = i;
    records.push_back(std::move(r));
    out.truth.entries.push_back(truth);
  };

  std::size_t signal_pos = 0;
  std::size_t cycle_pos = 0;
  for (std::size_t i = 0; i < config.total_messages; ++i) {
    if (config.noise_fraction > 0.0 && unit(rng) < config.noise_fraction) {
      const auto k = std::uniform_int_distribution<std::size_t>(0, config.noise_templates.size() - 1)(rng);
      emit(i, config.noise_templates[k], config.noise_priority, router_dist(rng),
           {noise_family, n_family_templates + static_cast<int>(k), std::nullopt, true});
      continue;
    }

    int tid = -1;
    int router = 0;
    std::optional<std::size_t> parent;
    if (auto it = pending.find(signal_pos); it != pending.end()) {
      const Pending p = it->second.front();
      it->second.pop_front();
      if (!it->second.empty()) {
        auto& next = pending[signal_pos + 1];
        for (auto r = it->second.rbegin(); r != it->second.rend(); ++r) next.push_front(*r);
      }
      pending.erase(signal_pos);
      tid = p.template_id;
      router = p.router;
      parent = p.parent;
    } else {
      const double u = unit(rng);
      double acc = 0.0;
      const double scale = cycle.empty() ? rate_sum : 1.0;
      for (std::size_t f = 0; f < spont.size() && tid < 0; ++f) {
        if (spont[f].empty()) continue;
        acc += config.families[f].base_rate;
        if (u * scale < acc) {
          tid = spont[f][std::uniform_int_distribution<std::size_t>(0, spont[f].size() - 1)(rng)];
        }
      }
      if (tid < 0) tid = cycle[cycle_pos++ % cycle.size()];
      router = router_dist(rng);
    }

    const auto& spec = config.template_at(tid);
    const std::size_t index = records.size();
    emit(i, spec.text, spec.priority, router, {config.family_of(tid), tid, parent, false});
    for (const auto& rule : config.rules) {
      if (rule.trigger != tid) continue;
      if (rule.probability < 1.0 && !(unit(rng) < rule.probability)) continue;
      pending[signal_pos + static_cast<std::size_t>(rule.lag)].push_back({rule.consequence, index, router});
    }
    ++signal_pos;
  }
  out.batch.lines_read = records.size();
  return out;
}

std::vector<int> family_labels(const GroundTruth& truth) {
  std::vector<int> labels;
  labels.reserve(truth.entries.size());
  for (const auto& e : truth.entries) labels.push_back(e.family);
  return labels;
}

std::vector<std::string> configured_templates(const SynthConfig& config) {
  std::vector<std::string> out;
  for (const auto& f : config.families)
    for (const auto& t : f.templates) out.push_back(normalize_message(blank_slots(t.text)));
  for (const auto& t : config.noise_templates) out.push_back(normalize_message(blank_slots(t)));
  return out;
}

void write_jsonl(std::ostream& out, const RecordBatch& batch) {
  for (const auto& r : batch.records) {
    nlohmann::json j = {{"ip", r.ip}, {"time", r.time}, {"message", r.message}, {"priority", r.priority}};
    if (!r.hostname.empty()) j["hostname"] = r.hostname;
    if (!r.ifdescr.empty()) j["ifdescr"] = r.ifdescr;
    if (!r.vendor.empty()) j["vendor"] = r.vendor;
    if (!r.device_type.empty()) j["device_type"] = r.device_type;
    if (!r.market_site.empty()) j["market_site"] = r.market_site;
    if (r.facility_num) j["facility_num"] = *r.facility_num;
    out << j.dump() << '\n';
  }
  if (!out) throw Error("failed to write records");
}

}  // namespace logsentinel
