#include "ctxflow/summary_store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>

#include "ctxflow/error.hpp"

namespace ctxflow {

using nlohmann::json;

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

IpAddress parse_ip_or_throw(std::string_view text) {
  auto ip = IpAddress::parse(text);
  if (!ip) throw FormatError("bad IP address '" + std::string(text) + "'");
  return *ip;
}

json pair_json(const PairKey& k) {
  return {{"capture", k.capture_name},
          {"source", k.source.to_string()},
          {"destination", k.destination.to_string()}};
}

PairKey pair_from_json(const json& j) {
  return {j.at("capture").get<std::string>(),
          parse_ip_or_throw(j.at("source").get<std::string>()),
          parse_ip_or_throw(j.at("destination").get<std::string>())};
}

json provenance_json(const Blacklist::Provenance& p) {
  return {{"cs_id", p.cs_id}, {"detected_at", p.detected_at}};
}

Blacklist::Provenance provenance_from_json(const json& j) {
  return {j.value("cs_id", std::int64_t{-1}), j.value("detected_at", 0.0)};
}

void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  const auto tmp = std::filesystem::path(p.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace

double update_numeric(double old, std::int64_t n_prev, double incoming) {
  const double n = static_cast<double>(n_prev);
  return (old * n + incoming) / (n + 1);
}

ProtocolSet update_flags(ProtocolSet old, ProtocolSet incoming) {
  return ProtocolSet::from_bits(static_cast<std::uint8_t>(old.bits() | incoming.bits()));
}

void update_ua_store(std::set<std::string>& store, std::span<const std::string> incoming) {
  store.insert(incoming.begin(), incoming.end());
}

bool Blacklist::add_ip(const IpAddress& ip, Provenance p) {
  if (!ips.insert(ip).second) return false;
  provenance["ip:" + ip.to_string()] = p;
  return true;
}

bool Blacklist::add_fqdn(const std::string& fqdn, Provenance p) {
  const std::string f = lower(fqdn);
  if (f.empty() || !fqdns.insert(f).second) return false;
  provenance["fqdn:" + f] = p;
  return true;
}

std::size_t Blacklist::import_text(std::istream& in) {
  std::size_t added = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.starts_with("ip:")) {
      auto ip = IpAddress::parse(trim(t.substr(3)));
      if (!ip) throw FormatError("blacklist line " + std::to_string(lineno) + ": bad IP");
      added += add_ip(*ip) ? 1 : 0;
    } else if (t.starts_with("fqdn:")) {
      const std::string f = trim(t.substr(5));
      if (f.empty()) throw FormatError("blacklist line " + std::to_string(lineno) + ": empty fqdn");
      added += add_fqdn(f) ? 1 : 0;
    } else {
      throw FormatError("blacklist line " + std::to_string(lineno) +
                        ": expected ip: or fqdn: prefix");
    }
  }
  return added;
}

void Blacklist::export_text(std::ostream& out) const {
  for (const auto& ip : ips) out << "ip:" << ip.to_string() << '\n';
  for (const auto& f : fqdns) out << "fqdn:" << f << '\n';
}

std::string_view to_string(Verdict v) { return v == Verdict::PASS ? "PASS" : "BLOCKED"; }

Verdict blacklist_check(const PairFlow& flow, const Blacklist& bl) {
  if (bl.ips.contains(flow.pair.destination)) return Verdict::BLOCKED;
  for (const auto& f : flow.fqdns) {
    if (bl.fqdns.contains(lower(f.fqdn))) return Verdict::BLOCKED;
  }
  return Verdict::PASS;
}

FlowId SummaryRegistry::assign_flow_id(const PairKey& pair) {
  const FlowId id = directory_.assign(pair);
  pending_.push_back({{"op", "assign"},
                      {"pair", pair_json(pair)},
                      {"cs_id", id.cs_id},
                      {"pf_id", id.pf_id}});
  return id;
}

const ContextualSummary* SummaryRegistry::find(const PairKey& pair) const {
  const auto e = directory_.find(pair);
  if (!e) return nullptr;
  return find(e->cs_id);
}

const ContextualSummary* SummaryRegistry::find(std::int64_t cs_id) const {
  auto it = summaries_.find(cs_id);
  return it == summaries_.end() ? nullptr : &it->second;
}

ContextualSummary& SummaryRegistry::upsert(const FeatureVector& v, const PairFlow& flow,
                                           std::span<const std::string> host_uas,
                                           std::int64_t profile_interval) {
  const std::int64_t cs_id = flow.flow_id.cs_id;
  auto it = summaries_.find(cs_id);
  if (it == summaries_.end()) {
    ContextualSummary s;
    s.cs_id = cs_id;
    s.pair = flow.pair;
    s.window_span = flow.time_window;
    s.last_pf_id = 0;
    s.last_flow_pf_id = flow.flow_id.pf_id;
    s.profile_interval = profile_interval;
    s.features = v;
    s.epflag_union = flow.epflag;
    update_ua_store(s.ua_store, host_uas);
    it = summaries_.emplace(cs_id, std::move(s)).first;
  } else {
    ContextualSummary& s = it->second;
    const std::int64_t n_prev = s.last_pf_id + 1;
    for (int id = 1; id <= kLastFlowSlot; ++id) {
      const bool present = s.features.has(id) || v.has(id);
      s.features.set(id, update_numeric(s.features.at(id), n_prev, v.at(id)), present);
    }
    if (profile_interval != s.profile_interval) {
      for (int id = kLastFlowSlot + 1; id <= static_cast<int>(kFeatureCount); ++id) {
        s.features.set(id, v.at(id), v.has(id));
      }
      s.profile_interval = profile_interval;
    }
    s.features.flow_id = v.flow_id;
    s.features.host_key = v.host_key;
    s.features.dest_key = v.dest_key;
    s.features.url_key = v.url_key;
    s.last_pf_id += 1;
    s.last_flow_pf_id = flow.flow_id.pf_id;
    s.window_span.start = std::min(s.window_span.start, flow.time_window.start);
    s.window_span.end = std::max(s.window_span.end, flow.time_window.end);
    s.epflag_union = update_flags(s.epflag_union, flow.epflag);
    update_ua_store(s.ua_store, host_uas);
  }
  ContextualSummary& s = it->second;
  // Distinct UAs come from the store rather than the averaged vector.
  if (mode_mask(s.features.mask)[58]) {
    s.features.set(59, static_cast<double>(s.ua_store.size()));
  }
  pending_.push_back({{"op", "summary"}, {"summary", to_json(s)}});
  return s;
}

void SummaryRegistry::set_label(std::int64_t cs_id, ClassLabel label) {
  auto it = summaries_.find(cs_id);
  if (it == summaries_.end()) throw DataError("unknown cs_id " + std::to_string(cs_id));
  it->second.label = label;
  pending_.push_back({{"op", "label"}, {"cs_id", cs_id}, {"label", to_string(label)}});
}

bool SummaryRegistry::blacklist_ip(const IpAddress& ip, Blacklist::Provenance p) {
  if (!blacklist_.add_ip(ip, p)) return false;
  pending_.push_back({{"op", "blacklist"}, {"ip", ip.to_string()}, {"provenance", provenance_json(p)}});
  return true;
}

bool SummaryRegistry::blacklist_fqdn(const std::string& fqdn, Blacklist::Provenance p) {
  if (!blacklist_.add_fqdn(fqdn, p)) return false;
  pending_.push_back(
      {{"op", "blacklist"}, {"fqdn", lower(fqdn)}, {"provenance", provenance_json(p)}});
  return true;
}

void SummaryRegistry::apply_event(const json& ev) {
  const std::string op = ev.at("op").get<std::string>();
  if (op == "assign") {
    const PairKey pair = pair_from_json(ev.at("pair"));
    const std::int64_t cs = ev.at("cs_id").get<std::int64_t>();
    const std::int64_t pf = ev.at("pf_id").get<std::int64_t>();
    const auto cur = directory_.find(pair);
    if (!cur || cur->last_pf_id < pf) directory_.restore(pair, {cs, pf});
    if (directory_.next_cs_id() <= cs) directory_.set_next_cs_id(cs + 1);
  } else if (op == "summary") {
    ContextualSummary s = summary_from_json(ev.at("summary"));
    summaries_[s.cs_id] = std::move(s);
  } else if (op == "label") {
    auto label = parse_class_label(ev.at("label").get<std::string>());
    auto it = summaries_.find(ev.at("cs_id").get<std::int64_t>());
    if (label && it != summaries_.end()) it->second.label = *label;
  } else if (op == "blacklist") {
    const auto p = provenance_from_json(ev.value("provenance", json::object()));
    if (ev.contains("ip")) blacklist_.add_ip(parse_ip_or_throw(ev["ip"].get<std::string>()), p);
    if (ev.contains("fqdn")) blacklist_.add_fqdn(ev["fqdn"].get<std::string>(), p);
  } else {
    throw FormatError("unknown registry event '" + op + "'");
  }
}

SummaryRegistry SummaryRegistry::open(const std::filesystem::path& dir) {
  SummaryRegistry reg;
  try {
    const auto snap = dir / kSnapshotFile;
    if (std::filesystem::exists(snap)) {
      std::ifstream in(snap);
      if (!in) throw DataError("cannot read " + snap.string());
      reg = from_snapshot(json::parse(in));
    }
    const auto log = dir / kLogFile;
    if (std::filesystem::exists(log)) {
      std::ifstream in(log);
      std::string line;
      while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json ev;
        try {
          ev = json::parse(line);
        } catch (const json::parse_error&) {
          break;  // torn final append
        }
        reg.apply_event(ev);
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("registry: ") + e.what());
  }
  return reg;
}

void SummaryRegistry::persist(const std::filesystem::path& dir) {
  if (pending_.empty()) return;
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / kLogFile, std::ios::app);
  if (!out) throw DataError("cannot append to " + (dir / kLogFile).string());
  for (const auto& ev : pending_) out << ev.dump() << '\n';
  out.flush();
  if (!out) throw DataError("write failed: " + (dir / kLogFile).string());
  pending_.clear();
}

void SummaryRegistry::compact(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / kSnapshotFile, snapshot_json().dump(1) + "\n");
  std::ofstream(dir / kLogFile, std::ios::trunc);
  pending_.clear();
}

json SummaryRegistry::snapshot_json() const {
  json dir = json::array();
  for (const auto& [pair, e] : directory_.entries()) {
    json row = pair_json(pair);
    row["cs_id"] = e.cs_id;
    row["last_pf_id"] = e.last_pf_id;
    dir.push_back(std::move(row));
  }
  json sums = json::array();
  for (const auto& [id, s] : summaries_) sums.push_back(to_json(s));
  json ips = json::array(), fqdns = json::array(), prov = json::object();
  for (const auto& ip : blacklist_.ips) ips.push_back(ip.to_string());
  for (const auto& f : blacklist_.fqdns) fqdns.push_back(f);
  for (const auto& [k, p] : blacklist_.provenance) prov[k] = provenance_json(p);
  return {{"version", kSnapshotVersion},
          {"next_cs_id", directory_.next_cs_id()},
          {"directory", dir},
          {"summaries", sums},
          {"blacklist", {{"ips", ips}, {"fqdns", fqdns}, {"provenance", prov}}}};
}

SummaryRegistry SummaryRegistry::from_snapshot(const json& j) {
  if (j.value("version", 0) > kSnapshotVersion) {
    throw FormatError("registry snapshot version is newer than supported");
  }
  SummaryRegistry reg;
  for (const auto& row : j.value("directory", json::array())) {
    reg.directory_.restore(pair_from_json(row),
                           {row.at("cs_id").get<std::int64_t>(),
                            row.at("last_pf_id").get<std::int64_t>()});
  }
  reg.directory_.set_next_cs_id(j.value("next_cs_id", std::int64_t{0}));
  for (const auto& s : j.value("summaries", json::array())) {
    ContextualSummary cs = summary_from_json(s);
    reg.summaries_[cs.cs_id] = std::move(cs);
  }
  const json bl = j.value("blacklist", json::object());
  for (const auto& ip : bl.value("ips", json::array())) {
    reg.blacklist_.ips.insert(parse_ip_or_throw(ip.get<std::string>()));
  }
  for (const auto& f : bl.value("fqdns", json::array())) reg.blacklist_.fqdns.insert(f.get<std::string>());
  const json prov = bl.value("provenance", json::object());
  for (const auto& [k, p] : prov.items()) {
    reg.blacklist_.provenance[k] = provenance_from_json(p);
  }
  return reg;
}

ContextualSummary& upsert_summary(const FeatureVector& flow_features, const PairFlow& flow,
                                  SummaryRegistry& registry, std::span<const std::string> host_uas,
                                  std::int64_t profile_interval) {
  return registry.upsert(flow_features, flow, host_uas, profile_interval);
}

json to_json(const FeatureVector& v) {
  std::string present(kFeatureCount, '0');
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (v.present[i]) present[i] = '1';
  }
  return {{"flow_id", {v.flow_id.cs_id, v.flow_id.pf_id}},
          {"mode", to_string(v.mask)},
          {"host_key", v.host_key},
          {"dest_key", v.dest_key},
          {"url_key", v.url_key},
          {"present", present},
          {"values", v.values}};
}

FeatureVector feature_vector_from_json(const json& j) {
  try {
    FeatureVector v;
    const auto& id = j.at("flow_id");
    v.flow_id = {id.at(0).get<std::int64_t>(), id.at(1).get<std::int64_t>()};
    v.mask = parse_mode(j.value("mode", "http"));
    v.host_key = j.value("host_key", "");
    v.dest_key = j.value("dest_key", "");
    v.url_key = j.value("url_key", "");
    const auto values = j.at("values").get<std::vector<double>>();
    const auto present = j.at("present").get<std::string>();
    if (values.size() != kFeatureCount || present.size() != kFeatureCount) {
      throw FormatError("feature vector must have 102 slots");
    }
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      v.values[i] = values[i];
      v.present[i] = present[i] == '1';
    }
    return v;
  } catch (const json::exception& e) {
    throw FormatError(std::string("feature vector: ") + e.what());
  }
}

json to_json(const ContextualSummary& s) {
  return {{"cs_id", s.cs_id},
          {"pair", pair_json(s.pair)},
          {"window_span", {s.window_span.start, s.window_span.end}},
          {"last_pf_id", s.last_pf_id},
          {"last_flow_pf_id", s.last_flow_pf_id},
          {"profile_interval", s.profile_interval},
          {"epflag_union", s.epflag_union.render()},
          {"ua_store", s.ua_store},
          {"label", s.label ? json(to_string(*s.label)) : json(nullptr)},
          {"features", to_json(s.features)}};
}

ContextualSummary summary_from_json(const json& j) {
  try {
    ContextualSummary s;
    s.cs_id = j.at("cs_id").get<std::int64_t>();
    s.pair = pair_from_json(j.at("pair"));
    s.window_span = {j.at("window_span").at(0).get<double>(), j.at("window_span").at(1).get<double>()};
    s.last_pf_id = j.at("last_pf_id").get<std::int64_t>();
    s.last_flow_pf_id = j.value("last_flow_pf_id", s.last_pf_id);
    s.profile_interval = j.value("profile_interval", std::int64_t{-1});
    s.epflag_union = ProtocolSet::parse(j.value("epflag_union", ""));
    s.ua_store = j.value("ua_store", std::set<std::string>{});
    if (j.contains("label") && !j["label"].is_null()) {
      s.label = parse_class_label(j["label"].get<std::string>());
    }
    s.features = feature_vector_from_json(j.at("features"));
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("summary: ") + e.what());
  }
}

}  // namespace ctxflow
