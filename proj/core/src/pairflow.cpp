#include "ctxflow/pairflow.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ctxflow/error.hpp"
#include "ctxflow/stats.hpp"

namespace ctxflow {
namespace {

constexpr std::string_view kProtocolNames[kProtocolCount] = {
    "TCP", "UDP", "DNS", "ICMP", "HTTP", "TLS", "SSL"};

bool is_number(std::string_view s) {
  if (s.empty()) return false;
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc{} && p == s.data() + s.size();
}

void push_distinct(std::vector<std::string>& v, const std::string& s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Host part of an observed URL or SNI when it is a name rather than an
// address literal.
std::optional<std::string> name_of(std::string_view host) {
  if (host.empty()) return std::nullopt;
  if (host.front() == '[') return std::nullopt;
  if (IpAddress::parse(host)) return std::nullopt;
  return lower(host);
}

bool by_arrival(const RawPacket& a, const RawPacket& b) {
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  return a.packet_index < b.packet_index;
}

PlanePoint make_point(const RawPacket& p, const PairKey& pair) {
  PlanePoint pt;
  pt.packet_index = p.packet_index;
  pt.timestamp = p.timestamp;
  pt.length = p.length;
  pt.outbound = p.src_addr == pair.source;
  return pt;
}

}  // namespace

std::string PairKey::to_string() const {
  return capture_name + "|" + source.to_string() + "|" + destination.to_string();
}

std::size_t PairKeyHash::operator()(const PairKey& k) const noexcept {
  std::size_t h = std::hash<std::string>{}(k.capture_name);
  const IpAddressHash ih;
  h ^= ih(k.source) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= ih(k.destination) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

std::string_view to_string(Protocol p) {
  return kProtocolNames[static_cast<std::size_t>(p)];
}

std::optional<Protocol> parse_protocol(std::string_view name) {
  for (std::size_t i = 0; i < kProtocolCount; ++i) {
    if (kProtocolNames[i] == name) return static_cast<Protocol>(i);
  }
  return std::nullopt;
}

std::vector<Protocol> ProtocolSet::members() const {
  std::vector<Protocol> out;
  for (std::size_t i = 0; i < kProtocolCount; ++i) {
    if (contains(static_cast<Protocol>(i))) out.push_back(static_cast<Protocol>(i));
  }
  return out;
}

std::string ProtocolSet::render() const {
  std::vector<std::string_view> names;
  for (Protocol p : members()) names.push_back(ctxflow::to_string(p));
  std::sort(names.begin(), names.end());
  std::string out;
  for (auto n : names) {
    if (!out.empty()) out += '|';
    out += n;
  }
  return out;
}

ProtocolSet ProtocolSet::parse(std::string_view rendered) {
  ProtocolSet s;
  std::size_t start = 0;
  while (start < rendered.size()) {
    std::size_t end = rendered.find('|', start);
    if (end == std::string_view::npos) end = rendered.size();
    const auto name = rendered.substr(start, end - start);
    auto p = parse_protocol(name);
    if (!p) throw FormatError("unknown protocol in EPFLAG: " + std::string(name));
    s.insert(*p);
    start = end + 1;
  }
  return s;
}

std::string render(const PlanePoint& p) {
  std::ostringstream os;
  os << '(' << p.packet_index << ", '" << p.tag << '\'';
  for (const auto& d : p.details) {
    if (is_number(d)) {
      os << ", " << d;
    } else {
      os << ", '" << d << '\'';
    }
  }
  char ts[64];
  std::snprintf(ts, sizeof ts, "%.2f", p.timestamp);
  os << ", " << ts << ", " << p.length << ')';
  return os.str();
}

DomainAges load_domain_ages(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path.string());
  DomainAges ages;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    for (auto& c : line) {
      if (c == ',' || c == '\t') c = ' ';
    }
    std::istringstream ls(line);
    std::string fqdn;
    double age = 0;
    if (!(ls >> fqdn)) continue;
    if (!(ls >> age)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected '<fqdn> <age_days>'");
    }
    ages[lower(fqdn)] = age;
  }
  return ages;
}

PairDirectory::PairDirectory(const PairDirectory& other) {
  std::lock_guard lock(other.mu_);
  entries_ = other.entries_;
  next_cs_id_ = other.next_cs_id_;
}

PairDirectory& PairDirectory::operator=(const PairDirectory& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  entries_ = other.entries_;
  next_cs_id_ = other.next_cs_id_;
  return *this;
}

FlowId PairDirectory::assign(const PairKey& pair) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(pair);
  if (it == entries_.end()) {
    Entry e{next_cs_id_++, 0};
    entries_.emplace(pair, e);
    return {e.cs_id, 0};
  }
  ++it->second.last_pf_id;
  return {it->second.cs_id, it->second.last_pf_id};
}

std::optional<PairDirectory::Entry> PairDirectory::find(const PairKey& pair) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(pair);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::int64_t PairDirectory::next_cs_id() const {
  std::lock_guard lock(mu_);
  return next_cs_id_;
}

std::size_t PairDirectory::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::map<PairKey, PairDirectory::Entry> PairDirectory::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

void PairDirectory::restore(const PairKey& pair, Entry e) {
  std::lock_guard lock(mu_);
  entries_[pair] = e;
  next_cs_id_ = std::max(next_cs_id_, e.cs_id + 1);
}

void PairDirectory::set_next_cs_id(std::int64_t next) {
  std::lock_guard lock(mu_);
  next_cs_id_ = std::max(next_cs_id_, next);
}

TrackedWindow track_pairs(const WindowBatch& batch, const OrientationHint& known) {
  TrackedWindow out;
  out.capture_name = batch.capture_name;
  out.window = {batch.start, batch.end};

  using Endpoints = std::pair<IpAddress, IpAddress>;  // (lower, higher)
  struct Group {
    std::vector<RawPacket> packets;
    std::optional<IpAddress> initiator;  // sender of the first bare SYN
  };
  std::map<Endpoints, Group> groups;

  for (const auto& p : batch.packets) {
    if (p.is_dns()) {
      out.dns_pool.push_back(p);
      continue;
    }
    if (p.src_addr == p.dst_addr) continue;
    const Endpoints key = p.src_addr < p.dst_addr ? Endpoints{p.src_addr, p.dst_addr}
                                                  : Endpoints{p.dst_addr, p.src_addr};
    Group& g = groups[key];
    if (!g.initiator && p.tcp_flags &&
        (*p.tcp_flags & (tcp_flag::kSyn | tcp_flag::kAck)) == tcp_flag::kSyn) {
      g.initiator = p.src_addr;
    }
    g.packets.push_back(p);
  }

  for (auto& [ends, g] : groups) {
    const PairKey ab{batch.capture_name, ends.first, ends.second};
    const PairKey ba = ab.reversed();
    PairKey key;
    if (known && known(ab)) {
      key = ab;
    } else if (known && known(ba)) {
      key = ba;
    } else {
      const IpAddress src = g.initiator ? *g.initiator : g.packets.front().src_addr;
      key = src == ab.source ? ab : ba;
    }
    out.pairs.emplace(std::move(key), std::move(g.packets));
  }
  return out;
}

void attach_dns(std::map<PairKey, std::vector<RawPacket>>& pairs,
                std::span<const RawPacket> dns_pool) {
  if (dns_pool.empty()) return;
  for (auto& [key, packets] : pairs) {
    const std::string dest = key.destination.to_string();
    std::set<std::string> qnames;
    std::vector<const RawPacket*> picked;
    for (const auto& r : dns_pool) {
      if (r.app_meta->kind != AppKind::DNS_RESPONSE || r.dst_addr != key.source) continue;
      const bool resolves = std::any_of(
          r.app_meta->dns_answers.begin(), r.app_meta->dns_answers.end(),
          [&](const DnsAnswer& a) {
            return (a.record_type == "A" || a.record_type == "AAAA") && a.value == dest;
          });
      if (!resolves) continue;
      picked.push_back(&r);
      if (r.app_meta->dns_qname) qnames.insert(*r.app_meta->dns_qname);
    }
    if (picked.empty()) continue;
    for (const auto& q : dns_pool) {
      if (q.app_meta->kind == AppKind::DNS_REQUEST && q.src_addr == key.source &&
          q.app_meta->dns_qname && qnames.count(*q.app_meta->dns_qname)) {
        picked.push_back(&q);
      }
    }
    for (const RawPacket* p : picked) packets.push_back(*p);
    std::stable_sort(packets.begin(), packets.end(), by_arrival);
  }
}

FlowId assign_flow_id(const PairKey& pair, PairDirectory& directory) {
  return directory.assign(pair);
}

Planes separate_planes(std::span<const RawPacket> packets, const PairKey& pair) {
  Planes planes;
  for (const auto& p : packets) {
    PlanePoint pt = make_point(p, pair);
    switch (p.ip_proto) {
      case IpProto::TCP: {
        if (p.payload_length == 0) {
          char tag[8];
          std::snprintf(tag, sizeof tag, "0x%02x", p.tcp_flags.value_or(0));
          pt.tag = tag;
          planes.tcp_control.push_back(std::move(pt));
          break;
        }
        if (p.is_http()) {
          const auto& m = *p.app_meta;
          pt.tag = "HTTP";
          if (m.kind == AppKind::HTTP_REQUEST) {
            pt.details = {"Request", m.http_method.value_or("")};
          } else {
            pt.details = {"Response", std::to_string(m.http_status.value_or(0))};
          }
          pt.details.push_back(m.content_type.value_or("Empty Content"));
        } else if (p.is_tls_record()) {
          pt.tag = p.is_ssl() ? "SSL" : "TLS";
          const auto& m = *p.app_meta;
          if (m.kind == AppKind::TLS_HANDSHAKE) {
            if (m.tls_fields) {
              pt.details = {m.tls_fields->role == TlsMeta::Role::CLIENT ? "Client Hello"
                                                                        : "Server Hello"};
            } else {
              pt.details = {"Handshake"};
            }
          } else {
            pt.details = {"Application Data"};
          }
        } else {
          pt.tag = "TCP";
        }
        planes.tcp_data.push_back(std::move(pt));
        break;
      }
      case IpProto::UDP:
        if (p.is_dns()) {
          pt.tag = "DNS";
          pt.details = {p.app_meta->kind == AppKind::DNS_REQUEST ? "DNS Request"
                                                                 : "DNS Response"};
        } else {
          pt.tag = "UDP";
        }
        planes.udp.push_back(std::move(pt));
        break;
      case IpProto::ICMP:
        pt.tag = "ICMP";
        pt.details = {std::to_string(p.icmp_type.value_or(0)),
                      std::to_string(p.icmp_code.value_or(0))};
        planes.icmp.push_back(std::move(pt));
        break;
      case IpProto::OTHER:
        break;
    }
  }
  return planes;
}

PairFlow encapsulate(const FlowId& flow_id, const PairKey& pair,
                     std::span<const RawPacket> input, const TimeWindow& window,
                     const DomainAges* ages) {
  if (input.empty()) throw EmptyFlow();
  std::vector<RawPacket> packets(input.begin(), input.end());
  std::stable_sort(packets.begin(), packets.end(), by_arrival);

  PairFlow f;
  f.flow_id = flow_id;
  f.pair = pair;
  f.time_window = window;
  f.planes = separate_planes(packets, pair);

  InitialStats& s = f.stats;
  std::vector<double> ttls, deltas, content_lengths;
  std::vector<double> ccs, scs, cext, sext;
  bool have_client = false, have_server = false;

  auto add_fqdn = [&](const std::string& name) -> FqdnRecord& {
    auto it = std::find_if(f.fqdns.begin(), f.fqdns.end(),
                           [&](const FqdnRecord& r) { return r.fqdn == name; });
    if (it != f.fqdns.end()) return *it;
    FqdnRecord r;
    r.fqdn = name;
    if (ages) {
      if (auto a = ages->find(name); a != ages->end()) r.domain_age_days = a->second;
    }
    f.fqdns.push_back(std::move(r));
    return f.fqdns.back();
  };

  for (std::size_t i = 0; i < packets.size(); ++i) {
    const RawPacket& p = packets[i];
    const bool out = p.src_addr == pair.source;
    const double len = p.length;
    s.total_bytes += len;
    (out ? s.total_sent : s.total_received) += len;
    ttls.push_back(p.ttl);
    if (i > 0) deltas.push_back(p.timestamp - packets[i - 1].timestamp);

    switch (p.ip_proto) {
      case IpProto::TCP:
        f.epflag.insert(Protocol::TCP);
        ++s.n_tcp_total;
        if (p.is_http()) {
          ++s.n_http;
          f.epflag.insert(Protocol::HTTP);
        } else if (p.is_tls_record()) {
          if (p.is_ssl()) {
            ++s.n_ssl;
            f.epflag.insert(Protocol::SSL);
          } else {
            ++s.n_tls;
            f.epflag.insert(Protocol::TLS);
          }
          s.total_encrypted += len;
          (out ? s.encrypted_sent : s.encrypted_received) += len;
        } else {
          ++s.n_raw_tcp;
        }
        break;
      case IpProto::UDP:
        f.epflag.insert(Protocol::UDP);
        if (p.is_dns()) {
          ++s.n_dns;
          f.epflag.insert(Protocol::DNS);
        } else {
          ++s.n_raw_udp;
        }
        break;
      case IpProto::ICMP:
        f.epflag.insert(Protocol::ICMP);
        ++s.n_icmp;
        break;
      case IpProto::OTHER:
        break;
    }

    if (!p.app_meta) continue;
    const ApplicationMeta& m = *p.app_meta;
    switch (m.kind) {
      case AppKind::HTTP_REQUEST:
        if (m.url) {
          f.urls.push_back(parse_url(*m.url));
          if (auto n = name_of(f.urls.back().fqdn_or_ip)) add_fqdn(*n);
        }
        if (m.user_agent) f.user_agents.push_back(*m.user_agent);
        if (m.content_type) push_distinct(f.content_types, *m.content_type);
        if (m.content_length) content_lengths.push_back(static_cast<double>(*m.content_length));
        break;
      case AppKind::HTTP_RESPONSE:
        if (m.server_name) push_distinct(f.http_servers, *m.server_name);
        if (m.http_status) push_distinct(f.status_codes, std::to_string(*m.http_status));
        if (m.content_type) push_distinct(f.content_types, *m.content_type);
        if (m.content_length) content_lengths.push_back(static_cast<double>(*m.content_length));
        break;
      case AppKind::DNS_RESPONSE:
        if (m.dns_qname) {
          FqdnRecord& r = add_fqdn(*m.dns_qname);
          for (const auto& a : m.dns_answers) {
            if (a.record_type == "A" || a.record_type == "AAAA") {
              push_distinct(r.a_records, a.value);
            } else if (a.record_type == "NS") {
              push_distinct(r.ns_records, a.value);
            }
          }
        }
        break;
      case AppKind::TLS_HANDSHAKE:
        if (m.tls_fields) {
          const TlsMeta& t = *m.tls_fields;
          if (t.role == TlsMeta::Role::CLIENT) {
            ccs.push_back(t.cipher_suite_bytes);
            cext.push_back(t.extension_bytes);
            if (!have_client) f.tls.client = t;
            have_client = true;
            if (m.server_name) {
              if (auto n = name_of(*m.server_name)) add_fqdn(*n);
            }
          } else {
            scs.push_back(t.cipher_suite_bytes);
            sext.push_back(t.extension_bytes);
            if (!have_server) f.tls.server = t;
            have_server = true;
          }
        }
        break;
      default:
        break;
    }
  }

  s.n_packets = static_cast<std::int64_t>(packets.size());
  s.duration = packets.back().timestamp - packets.front().timestamp;
  const Summary ttl = summarize(ttls);
  s.ttl_max = ttl.max;
  s.ttl_min = ttl.min;
  s.ttl_mean = ttl.mean;
  s.ttl_sd = ttl.sd;
  const Summary d = summarize(deltas);
  s.delta_max = d.max;
  s.delta_min = d.min;
  s.delta_mean = d.mean;
  s.delta_sd = d.sd;
  const Summary cl = summarize(content_lengths);
  for (double v : content_lengths) s.content_length_total += v;
  s.content_length_max = cl.max;
  s.content_length_min = cl.min;
  s.content_length_median = median(content_lengths);
  auto fill = [](const std::vector<double>& xs, double& mx, double& mn, double& md) {
    const Summary sm = summarize(xs);
    mx = sm.max;
    mn = sm.min;
    md = median(xs);
  };
  fill(ccs, s.client_cs_bytes_max, s.client_cs_bytes_min, s.client_cs_bytes_median);
  fill(scs, s.server_cs_bytes_max, s.server_cs_bytes_min, s.server_cs_bytes_median);
  fill(cext, s.client_ext_bytes_max, s.client_ext_bytes_min, s.client_ext_bytes_median);
  fill(sext, s.server_ext_bytes_max, s.server_ext_bytes_min, s.server_ext_bytes_median);
  return f;
}

int count_fin_ack(const Planes& planes) {
  return static_cast<int>(std::count_if(
      planes.tcp_control.begin(), planes.tcp_control.end(),
      [](const PlanePoint& p) { return p.tag == "0x11"; }));
}

int count_dns_requests(const Planes& planes) {
  return static_cast<int>(std::count_if(
      planes.udp.begin(), planes.udp.end(), [](const PlanePoint& p) {
        return p.tag == "DNS" && !p.details.empty() && p.details[0] == "DNS Request";
      }));
}

std::optional<std::uint8_t> parse_flag_tag(std::string_view tag) {
  if (tag.size() != 4 || !tag.starts_with("0x")) return std::nullopt;
  unsigned v = 0;
  auto [p, ec] = std::from_chars(tag.data() + 2, tag.data() + 4, v, 16);
  if (ec != std::errc{} || p != tag.data() + 4) return std::nullopt;
  return static_cast<std::uint8_t>(v);
}

}  // namespace ctxflow
