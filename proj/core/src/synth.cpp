#include "ctxflow/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "ctxflow/error.hpp"
#include "ctxflow/ip_address.hpp"
#include "ctxflow/pcap_io.hpp"
#include "ctxflow/wire.hpp"

namespace ctxflow {

using nlohmann::json;

namespace {

// Ledger windows follow the default compile window.
constexpr double kLedgerWindow = 600;
constexpr std::int64_t kBaseEpochSeconds = 1'600'000'000;
constexpr std::uint32_t kMss = 1448;
constexpr std::uint32_t kMaxVirtual = 60'000;

constexpr std::array<std::string_view, kTtpCount> kTtpNames = {
    "fallback_channel", "web_protocol", "non_app_protocol",
    "protocol_impersonation", "ip_only", "encrypted_channel"};

constexpr std::array<std::string_view, 40> kWords = {
    "news",   "static", "img",    "assets", "media",  "cdn",    "api",    "login",
    "search", "app",    "blog",   "shop",   "cart",   "user",   "photos", "video",
    "js",     "css",    "fonts",  "docs",   "help",   "about",  "home",   "cloud",
    "data",   "feed",   "mail",   "maps",   "play",   "store",  "share",  "track",
    "update", "config", "status", "files",  "sync",   "view",   "auth",   "portal"};

constexpr std::array<std::string_view, 6> kBrowserUas = {
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) "
    "Chrome/86.0.4240.75 Safari/537.36",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:81.0) Gecko/20100101 Firefox/81.0",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) "
    "Chrome/86.0.4240.75 Safari/537.36 Edg/86.0.622.38",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/605.1.15 (KHTML, like "
    "Gecko) Version/14.0 Safari/605.1.15",
    "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) "
    "Chrome/85.0.4183.121 Safari/537.36",
    "Mozilla/5.0 (Windows NT 6.1; Win64; x64; rv:78.0) Gecko/20100101 Firefox/78.0"};

constexpr std::array<std::string_view, 3> kBotUas = {
    "Mozilla/4.0 (compatible; MSIE 7.0; Windows NT 5.1)",
    "Mozilla/4.0 (compatible; MSIE 6.0; Windows NT 5.1; SV1)", "Opera/9.80"};

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return mix64(h);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}
  double uni(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g_); }
  double uni(const Range& r) { return r.hi > r.lo ? uni(r.lo, r.hi) : r.lo; }
  // Log-uniform, for sizes spanning orders of magnitude.
  double log_uni(const Range& r) {
    return r.hi > r.lo ? std::exp(uni(std::log(r.lo), std::log(r.hi))) : r.lo;
  }
  int integer(int lo, int hi) {
    return hi > lo ? std::uniform_int_distribution<int>(lo, hi)(g_) : lo;
  }
  int integer(const Range& r) {
    return integer(static_cast<int>(std::lround(r.lo)), static_cast<int>(std::lround(r.hi)));
  }
  bool chance(double p) { return uni(0, 1) < p; }
  template <typename C>
  const auto& pick(const C& c) {
    return c[static_cast<std::size_t>(integer(0, static_cast<int>(c.size()) - 1))];
  }
  std::uint64_t next() { return g_(); }

 private:
  std::mt19937_64 g_;
};

std::int64_t us(double seconds) { return std::llround(seconds * 1e6); }

IpAddress ip_in(std::uint8_t a, std::uint64_t h) {
  const std::array<std::uint8_t, 4> b = {a, static_cast<std::uint8_t>(h >> 8),
                                         static_cast<std::uint8_t>(h >> 16),
                                         static_cast<std::uint8_t>(1 + (h >> 24) % 253)};
  return IpAddress::v4(std::span<const std::uint8_t, 4>(b));
}

std::string hex_string(Rng& rng, int n) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (int i = 0; i < n; ++i) s += kHex[rng.integer(0, 15)];
  return s;
}

std::string letters(Rng& rng, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += static_cast<char>('a' + rng.integer(0, 25));
  return s;
}

struct Server {
  IpAddress ip;
  std::string fqdn;  // empty: contacted by IP only
  bool tls = false;
  bool ssl3 = false;
  std::uint16_t port = 80;
  std::string server_header;
  std::vector<std::string> ns;
  double age_days = 0;
  std::uint8_t ttl = 64;
  bool dead = false;
};

// Popular legitimate sites shared by every browsing host.
const std::vector<Server>& site_pool() {
  static const std::vector<Server> pool = [] {
    std::vector<Server> out;
    Rng rng(0x51735eedULL);
    std::set<IpAddress> used;
    std::set<std::string> names;
    constexpr std::array<std::string_view, 5> tlds = {"com", "org", "net", "io", "co.uk"};
    constexpr std::array<std::string_view, 5> servers = {"nginx", "Apache", "cloudflare", "gws",
                                                         "Microsoft-IIS/10.0"};
    constexpr std::array<std::uint8_t, 4> octets = {104, 151, 142, 23};
    while (out.size() < 150) {
      Server s;
      s.ip = ip_in(octets[out.size() % octets.size()], rng.next());
      if (!used.insert(s.ip).second) continue;
      const std::string domain = std::string(rng.pick(kWords)) + std::string(rng.pick(kWords)) +
                                 "." + std::string(rng.pick(tlds));
      s.fqdn = (rng.chance(0.6) ? "www." : std::string(rng.pick(kWords)) + ".") + domain;
      if (!names.insert(s.fqdn).second) continue;
      s.tls = rng.chance(0.5);
      s.port = s.tls ? 443 : 80;
      s.server_header = std::string(rng.pick(servers));
      s.ns = {"ns1." + domain, "ns2." + domain};
      s.age_days = std::round(rng.uni(800, 9000));
      s.ttl = static_cast<std::uint8_t>(rng.integer(44, 58));
      out.push_back(std::move(s));
    }
    return out;
  }();
  return pool;
}

enum class Kind : std::uint8_t { Arp, Control, Http, Tls, Raw, DnsReq, DnsResp, Udp };

struct Event {
  std::int64_t t_us = 0;
  std::uint64_t seq = 0;
  wire::FrameSpec spec;
  Kind kind = Kind::Control;
  int flow = -1;
  std::string url;
  bool named = false;  // carries the server's name (DNS, Host header, SNI)
};

struct FlowTrack {
  const Server* server = nullptr;
  std::int64_t window = 0;
  bool confound = false;
  double target_ratio = 0;
};

enum class Style : std::uint8_t { Legit, Confound, Apt, Botnet };

class CaptureBuilder {
 public:
  CaptureBuilder(const ScenarioSpec& spec)
      : spec_(spec), p_(spec.params), rng_(mix64(spec.seed ^ hash_str(spec.name))) {
    host_ = ip_in(10, hash_str(spec.name));
    const std::array<std::uint8_t, 4> r = {192, 168, 255, 53};
    resolver_ = IpAddress::v4(std::span<const std::uint8_t, 4>(r));
    ua_ = pick_user_agent();
  }

  void build() {
    Event arp;
    arp.kind = Kind::Arp;
    arp.seq = seq_++;
    events_.push_back(std::move(arp));
    make_servers();
    std::set<std::string> names;
    for (auto& srv : servers_) {
      while (!srv.fqdn.empty() && !names.insert(srv.fqdn).second) srv.fqdn = letters(rng_, 2) + srv.fqdn;
    }
    switch (spec_.label) {
      case ClassLabel::LEGITIMATE: schedule_legit(); break;
      case ClassLabel::APT: schedule_malicious(Style::Apt); break;
      default: schedule_malicious(Style::Botnet); break;
    }
    std::stable_sort(events_.begin(), events_.end(), [](const Event& a, const Event& b) {
      return a.t_us != b.t_us ? a.t_us < b.t_us : a.seq < b.seq;
    });
  }

  std::size_t write(const std::filesystem::path& path) const {
    const std::int64_t base_ns = (kBaseEpochSeconds + static_cast<std::int64_t>(hash_str(spec_.name) % 86400)) *
                                 1'000'000'000LL;
    std::optional<PcapWriter> classic;
    std::optional<PcapngWriter> ng;
    if (spec_.pcapng) {
      ng.emplace(path, linktype::kEthernet);
    } else {
      classic.emplace(path, linktype::kEthernet);
    }
    for (const auto& e : events_) {
      const auto bytes = e.kind == Kind::Arp ? wire::arp_frame() : wire::ethernet_frame(e.spec);
      const std::uint32_t orig =
          e.kind == Kind::Arp ? static_cast<std::uint32_t>(bytes.size()) : wire::wire_length(e.spec);
      const std::int64_t ts = base_ns + e.t_us * 1000;
      if (ng) {
        ng->write(ts, bytes, orig);
      } else {
        classic->write(ts, bytes, orig);
      }
    }
    return events_.size();
  }

  void ledger(std::vector<PlantedFlow>& out) const {
    std::vector<std::vector<const Event*>> per_flow(flows_.size());
    for (const auto& e : events_) {
      if (e.flow >= 0) per_flow[static_cast<std::size_t>(e.flow)].push_back(&e);
    }
    for (std::size_t i = 0; i < flows_.size(); ++i) {
      const auto& evs = per_flow[i];
      if (evs.empty()) continue;
      const FlowTrack& ft = flows_[i];
      PlantedFlow f;
      f.capture = spec_.name;
      f.label = spec_.label;
      f.ttps = spec_.ttps;
      f.confound = ft.confound;
      f.source = host_.to_string();
      f.destination = ft.server->ip.to_string();
      f.window = ft.window;
      f.expect = ft.server->dead ? "FailedTCP" : "kept";
      f.ip_only = std::none_of(evs.begin(), evs.end(), [](const Event* e) { return e->named; });
      f.target_received_sent = ft.target_ratio;
      std::vector<double> data_times;
      std::set<std::string> urls;
      for (const Event* e : evs) {
        ++f.packets;
        const double len = wire::wire_length(e->spec);
        (e->spec.src == host_ ? f.bytes_sent : f.bytes_received) += len;
        switch (e->kind) {
          case Kind::Raw: ++f.n_raw_tcp; [[fallthrough]];
          case Kind::Http:
          case Kind::Tls: data_times.push_back(double(e->t_us) / 1e6); break;
          case Kind::DnsReq: ++f.dns_requests; break;
          case Kind::Control:
            ++f.n_raw_tcp;
            if (e->spec.tcp_flags == 0x11) ++f.fin_ack;
            break;
          default: break;
        }
        if (!e->url.empty()) urls.insert(e->url);
      }
      f.n_data_packets = static_cast<std::int64_t>(data_times.size());
      std::vector<double> gaps;
      for (std::size_t k = 1; k < data_times.size(); ++k) gaps.push_back(data_times[k] - data_times[k - 1]);
      if (!gaps.empty()) {
        f.idle_max = *std::max_element(gaps.begin(), gaps.end());
        f.idle_min = *std::min_element(gaps.begin(), gaps.end());
      }
      if (evs.size() >= 2) {
        f.delta_mean = (double(evs.back()->t_us - evs.front()->t_us) / 1e6) / double(evs.size() - 1);
      }
      f.urls.assign(urls.begin(), urls.end());
      out.push_back(std::move(f));
    }
  }

  void domain_ages(std::map<std::string, double>& ages) const {
    for (const auto& s : servers_) {
      if (!s.fqdn.empty()) ages.emplace(s.fqdn, s.age_days);
    }
  }

 private:
  bool has(Ttp t) const { return spec_.ttps.contains(t); }

  std::string pick_user_agent() {
    switch (spec_.label) {
      case ClassLabel::APT:
        if (has(Ttp::PROTOCOL_IMPERSONATION)) {
          return rng_.chance(0.25) ? std::string("Mozilla/5.0")
                                   : "Mozilla/5.0 (Windows NT 6.1; WOW64; Trident/7.0; rv:11.0) like Gecko " +
                                         hex_string(rng_, 6);
        }
        return std::string(rng_.pick(kBrowserUas));
      case ClassLabel::BOTNET: return std::string(rng_.pick(kBotUas));
      default: return std::string(rng_.pick(kBrowserUas));
    }
  }

  IpAddress unique_ip(std::uint8_t first) {
    for (;;) {
      IpAddress ip = ip_in(first, rng_.next());
      if (used_ips_.insert(ip).second) return ip;
    }
  }

  void make_servers() {
    for (const auto& s : site_pool()) used_ips_.insert(s.ip);
    const int n = rng_.integer(p_.servers);
    if (spec_.label == ClassLabel::LEGITIMATE) {
      std::vector<std::size_t> idx(site_pool().size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), std::mt19937_64(rng_.next()));
      std::size_t next_pool = 0;
      for (int i = 0; i < n; ++i) {
        Server s;
        if (rng_.chance(0.7)) {
          s = site_pool()[idx[next_pool++]];
        } else {
          s.ip = unique_ip(rng_.chance(0.5) ? 52 : 13);
          const std::string domain = std::string(rng_.pick(kWords)) + letters(rng_, 4) + ".com";
          s.fqdn = "www." + domain;
          s.tls = rng_.chance(p_.tls_fraction);
          s.port = s.tls ? 443 : 80;
          s.server_header = "nginx";
          s.ns = {"ns1." + domain};
          s.age_days = std::round(rng_.uni(200, 6000));
          s.ttl = static_cast<std::uint8_t>(rng_.integer(44, 58));
        }
        if (rng_.chance(p_.ip_only_fraction)) {
          s.fqdn.clear();
          s.tls = false;
          s.port = 80;
        }
        servers_.push_back(std::move(s));
      }
      return;
    }

    const bool apt = spec_.label == ClassLabel::APT;
    if (apt && has(Ttp::FALLBACK_CHANNEL)) {
      Server dead;
      dead.ip = unique_ip(185);
      dead.fqdn = std::string(rng_.pick(kWords)) + "-" + letters(rng_, 5) + ".net";
      dead.ns = {"ns1.dns-host.net"};
      dead.age_days = std::round(rng_.uni(3, 200));
      dead.dead = true;
      dead.port = 443;
      servers_.push_back(std::move(dead));
    }
    const std::string family_domain = letters(rng_, 7);
    for (int i = 0; i < n; ++i) {
      Server s;
      s.ip = unique_ip(apt ? (i % 2 ? 45 : 91) : (i % 2 ? 5 : 194));
      s.ttl = static_cast<std::uint8_t>(rng_.integer(40, 54));
      const bool ip_only = (apt ? has(Ttp::IP_ONLY) : true) && rng_.chance(p_.ip_only_fraction);
      if (!ip_only) {
        if (apt) {
          s.fqdn = std::string(rng_.pick(kWords)) + "-" + std::string(rng_.pick(kWords)) + "." +
                   (rng_.chance(0.5) ? "com" : "org");
          s.age_days = std::round(rng_.uni(3, 200));
        } else {
          s.fqdn = letters(rng_, rng_.integer(8, 14)) + "." + (rng_.chance(0.5) ? "ru" : "info");
          s.age_days = std::round(rng_.uni(1, 60));
        }
        s.ns = {"ns1." + family_domain + ".biz"};
      }
      s.tls = (apt ? has(Ttp::ENCRYPTED_CHANNEL) : true) && rng_.chance(p_.tls_fraction);
      s.ssl3 = s.tls && apt && rng_.chance(0.1);
      s.port = s.tls ? 443 : (apt && !has(Ttp::WEB_PROTOCOL) ? 8443 : 80);
      s.server_header = apt ? "Apache/2.2.15" : "nginx/1.0.15";
      servers_.push_back(std::move(s));
    }
  }

  // ---- packet primitives ----

  wire::FrameSpec tcp(const Server& s, std::uint16_t port, bool from_host, std::uint8_t flags) {
    wire::FrameSpec f;
    f.proto = IpProto::TCP;
    f.src = from_host ? host_ : s.ip;
    f.dst = from_host ? s.ip : host_;
    f.src_port = from_host ? port : s.port;
    f.dst_port = from_host ? s.port : port;
    f.tcp_flags = flags;
    f.ttl = from_host ? 128 : s.ttl;
    f.seq = static_cast<std::uint32_t>(rng_.next());
    f.ack = static_cast<std::uint32_t>(rng_.next());
    return f;
  }

  void emit(std::int64_t t, wire::FrameSpec spec, Kind k, int flow, std::string url = {}) {
    Event e;
    e.t_us = t;
    e.seq = seq_++;
    e.spec = std::move(spec);
    e.kind = k;
    e.flow = flow;
    e.url = std::move(url);
    events_.push_back(std::move(e));
  }

  std::int64_t rtt(const Server&) { return us(rng_.uni(p_.rtt)); }

  std::int64_t handshake(int flow, const Server& s, std::uint16_t port, std::int64_t t) {
    const std::int64_t r = rtt(s);
    emit(t, tcp(s, port, true, 0x02), Kind::Control, flow);
    emit(t + r, tcp(s, port, false, 0x12), Kind::Control, flow);
    emit(t + r + us(rng_.uni(0.0002, 0.002)), tcp(s, port, true, 0x10), Kind::Control, flow);
    return t + r + us(0.003);
  }

  std::int64_t close(int flow, const Server& s, std::uint16_t port, std::int64_t t) {
    const std::int64_t r = rtt(s);
    emit(t, tcp(s, port, true, 0x11), Kind::Control, flow);
    emit(t + r, tcp(s, port, false, 0x11), Kind::Control, flow);
    emit(t + r + us(0.0005), tcp(s, port, true, 0x10), Kind::Control, flow);
    return t + r + us(0.001);
  }

  std::int64_t dns(int flow, const Server& s, std::int64_t t) {
    const auto id = static_cast<std::uint16_t>(rng_.next());
    wire::FrameSpec q;
    q.proto = IpProto::UDP;
    q.src = host_;
    q.dst = resolver_;
    q.src_port = static_cast<std::uint16_t>(rng_.integer(49152, 65000));
    q.dst_port = 53;
    q.ttl = 128;
    q.payload = wire::dns_query(id, s.fqdn);
    wire::FrameSpec r = q;
    std::swap(r.src, r.dst);
    std::swap(r.src_port, r.dst_port);
    r.ttl = 64;
    r.payload = wire::dns_response(id, s.fqdn, {s.ip}, s.ns);
    const std::int64_t lat = us(rng_.uni(0.004, 0.04));
    emit(t, std::move(q), Kind::DnsReq, flow);
    events_.back().named = true;
    emit(t + lat, std::move(r), Kind::DnsResp, flow);
    events_.back().named = true;
    return t + lat + us(0.001);
  }

  std::int64_t raw(int flow, const Server& s, std::uint16_t port, std::int64_t t, bool from_host,
                   std::uint32_t bytes) {
    wire::FrameSpec f = tcp(s, port, from_host, 0x18);
    f.virtual_payload = std::max<std::uint32_t>(1, std::min(bytes, kMaxVirtual));
    emit(t, std::move(f), Kind::Raw, flow);
    return t;
  }

  std::int64_t tls_record(int flow, const Server& s, std::uint16_t port, std::int64_t t,
                          bool from_host, std::uint32_t bytes) {
    wire::FrameSpec f = tcp(s, port, from_host, 0x18);
    const std::uint32_t body = std::max<std::uint32_t>(16, std::min(bytes, kMss - 5));
    f.payload = wire::tls_app_data(s.ssl3 ? 0x0300 : 0x0303, body);
    f.virtual_payload = body;
    f.payload.resize(5);
    emit(t, std::move(f), Kind::Tls, flow);
    return t;
  }

  std::int64_t tls_hello(int flow, const Server& s, std::uint16_t port, std::int64_t t, bool odd) {
    wire::HelloSpec h;
    h.record_version = s.ssl3 ? 0x0300 : 0x0301;
    if (odd) {
      const std::uint16_t cs[] = {0x0005, 0x000a, 0x002f};
      std::copy(std::begin(cs), std::end(cs), h.cipher_suites_or_chosen);
      h.n_cipher_suites = 3;
      h.include_groups = rng_.chance(0.3);
      h.include_sigalgs = rng_.chance(0.3);
    } else {
      const std::uint16_t cs[] = {0x1301, 0x1302, 0x1303, 0xc02b, 0xc02f, 0xc02c, 0xc030, 0xcca9};
      std::copy(std::begin(cs), std::end(cs), h.cipher_suites_or_chosen);
      h.n_cipher_suites = 8;
      h.alpn = {"h2", "http/1.1"};
    }
    h.sni = s.fqdn;
    wire::FrameSpec ch = tcp(s, port, true, 0x18);
    ch.payload = wire::tls_client_hello(h);
    wire::HelloSpec sh = h;
    sh.n_cipher_suites = 1;
    wire::FrameSpec srv = tcp(s, port, false, 0x18);
    srv.payload = wire::tls_server_hello(sh);
    srv.virtual_payload = static_cast<std::uint32_t>(rng_.integer(900, 1300));  // certificate
    const std::int64_t r = rtt(s);
    emit(t, std::move(ch), Kind::Tls, flow);
    events_.back().named = !s.fqdn.empty();
    emit(t + r, std::move(srv), Kind::Tls, flow);
    emit(t + r + us(0.0005), tcp(s, port, true, 0x10), Kind::Control, flow);
    return t + r + us(0.002);
  }

  struct HttpExchange {
    std::string method = "GET";
    std::string target = "/";
    std::string req_ctype;
    std::uint32_t req_body = 0;
    int status = 200;
    std::string resp_ctype = "text/html";
    std::uint32_t resp_body = 0;
  };

  std::int64_t http(int flow, const Server& s, std::uint16_t port, std::int64_t t,
                    const HttpExchange& x, double seg_gap_lo, double seg_gap_hi) {
    const std::string host = s.fqdn.empty() ? s.ip.to_string() : s.fqdn;
    wire::FrameSpec req = tcp(s, port, true, 0x18);
    req.payload = wire::http_request(x.method, host, x.target, ua_, x.req_ctype, x.req_body);
    req.virtual_payload = std::min(x.req_body, kMaxVirtual);
    emit(t, std::move(req), Kind::Http, flow, host + x.target);
    events_.back().named = !s.fqdn.empty();
    std::int64_t now = t + rtt(s);
    wire::FrameSpec resp = tcp(s, port, false, 0x18);
    resp.payload = wire::http_response(x.status, s.server_header, x.resp_ctype, x.resp_body);
    const std::uint32_t first = std::min<std::uint32_t>(x.resp_body, kMss > resp.payload.size()
                                                                         ? kMss - static_cast<std::uint32_t>(resp.payload.size())
                                                                         : 0);
    resp.virtual_payload = first;
    emit(now, std::move(resp), Kind::Http, flow);
    std::uint32_t left = x.resp_body - first;
    int seg = 0;
    while (left > 0) {
      now += us(rng_.uni(seg_gap_lo, seg_gap_hi));
      const std::uint32_t n = std::min(left, kMss);
      raw(flow, s, port, now, false, n);
      left -= n;
      if (++seg % 4 == 0) emit(now + us(0.0002), tcp(s, port, true, 0x10), Kind::Control, flow);
    }
    emit(now + us(0.0003), tcp(s, port, true, 0x10), Kind::Control, flow);
    return now + us(0.001);
  }

  // ---- URLs ----

  std::string legit_target() {
    std::string t = "/";
    const int depth = rng_.integer(p_.url_depth);
    for (int i = 0; i < depth; ++i) t += std::string(rng_.pick(kWords)) + "/";
    static constexpr std::array<std::string_view, 8> exts = {"html", "js",  "css", "png",
                                                             "jpg",  "php", "json", "gif"};
    if (rng_.chance(0.75)) {
      const bool image = rng_.chance(p_.image_fraction);
      const std::string ext = image ? (rng_.chance(0.5) ? "png" : "jpg") : std::string(rng_.pick(exts));
      t += std::string(rng_.pick(kWords)) + letters(rng_, 2) + "." + ext;
    }
    const int params = rng_.integer(p_.url_params);
    for (int i = 0; i < params; ++i) {
      t += i == 0 ? "?" : "&";
      t += std::string(rng_.pick(kWords));
      if (rng_.chance(0.85)) t += "=" + (rng_.chance(0.1) ? letters(rng_, 3) + "%20" + letters(rng_, 3) : hex_string(rng_, rng_.integer(2, 12)));
    }
    if (rng_.chance(0.1)) t += "#" + std::string(rng_.pick(kWords));
    return t;
  }

  std::string apt_target() {
    std::string t = "/";
    const int depth = rng_.integer(p_.url_depth);
    for (int i = 0; i < depth; ++i) t += std::string(rng_.pick(kWords)) + "/";
    static constexpr std::array<std::string_view, 4> exts = {"php", "asp", "jsp", "aspx"};
    t += letters(rng_, rng_.integer(3, 8)) + "." + (rng_.chance(0.1) ? std::string("exe") : std::string(rng_.pick(exts)));
    const int params = rng_.integer(p_.url_params);
    for (int i = 0; i < params; ++i) {
      t += (i == 0 ? "?" : "&") + letters(rng_, rng_.integer(1, 3)) + "=" + hex_string(rng_, rng_.integer(6, 24));
      if (rng_.chance(0.3)) t += "%3D";
    }
    return t;
  }

  std::string bot_target() {
    if (rng_.chance(0.6)) return "/gate.php?id=" + hex_string(rng_, 8);
    return "/" + std::string(rng_.pick(kWords)) + ".php?" + letters(rng_, 1) + "=" + hex_string(rng_, 6);
  }

  std::string content_type_for(const std::string& target) {
    auto q = target.find_first_of("?#");
    const std::string path = target.substr(0, q);
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "js") return "application/javascript";
    if (ext == "css") return "text/css";
    if (ext == "png") return "image/png";
    if (ext == "jpg") return "image/jpeg";
    if (ext == "gif") return "image/gif";
    if (ext == "json") return "application/json";
    if (ext == "exe") return "application/octet-stream";
    return "text/html";
  }

  // ---- flows ----

  int new_flow(const Server& s, std::int64_t window, bool confound) {
    flows_.push_back({&s, window, confound, 0});
    return static_cast<int>(flows_.size()) - 1;
  }

  std::uint16_t next_port() {
    port_ = static_cast<std::uint16_t>(port_ >= 64000 ? 49152 : port_ + 1);
    return port_;
  }

  std::int64_t window_limit(std::int64_t w) const {
    const double end = std::min(double(w + 1) * kLedgerWindow, spec_.duration);
    return us(end - 1.0);
  }

  // Rolls back the events of an attempt that overran its window.
  bool commit_or_rollback(std::size_t mark, std::int64_t limit) {
    std::int64_t last = 0;
    for (std::size_t i = mark; i < events_.size(); ++i) last = std::max(last, events_[i].t_us);
    if (last < limit) return true;
    events_.resize(mark);
    return false;
  }

  double flow_count(int flow, Kind k) const {
    double n = 0;
    for (const auto& e : events_) {
      if (e.flow == flow && e.kind == k) n += 1;
    }
    return n;
  }

  // Bursts of raw (or TLS) data separated by pauses.
  std::int64_t bursts(int flow, const Server& s, std::uint16_t port, std::int64_t t, bool over_tls,
                      double ratio) {
    const int nb = rng_.integer(p_.bursts);
    for (int b = 0; b < nb; ++b) {
      if (b > 0) t += us(rng_.uni(p_.idle));
      const int np = rng_.integer(p_.burst_packets);
      for (int i = 0; i < np; ++i) {
        const bool from_host = i % 2 == 1;
        const auto size = static_cast<std::uint32_t>(from_host ? rng_.uni(40, 160) : rng_.uni(40, 160) * ratio);
        if (over_tls) {
          tls_record(flow, s, port, t, from_host, size);
        } else {
          raw(flow, s, port, t, from_host, size);
        }
        t += us(rng_.uni(p_.burst_gap));
      }
      emit(t, tcp(s, port, true, 0x10), Kind::Control, flow);
    }
    return t + us(0.001);
  }

  // Tops up raw data packets until the planted raw-TCP ratio floor holds.
  std::int64_t raw_floor(int flow, const Server& s, std::uint16_t port, std::int64_t t,
                         double dns_queries) {
    std::size_t total = 0, raw_n = 0;
    for (const auto& e : events_) {
      if (e.flow != flow) continue;
      ++total;
      if (e.kind == Kind::Raw || e.kind == Kind::Control) ++raw_n;
    }
    // Account for the closing exchange (three packets) and a margin.
    const double floor = p_.raw_tcp_floor + 0.02;
    const double n = double(total) + 3 + dns_queries * 0;
    const double need = std::ceil((floor * n - double(raw_n)) / (1 - floor));
    for (int i = 0; i < static_cast<int>(need); ++i) {
      t += us(rng_.uni(p_.burst_gap));
      raw(flow, s, port, t, i % 2 == 1, static_cast<std::uint32_t>(rng_.uni(40, 300)));
    }
    return t + us(0.001);
  }

  // Scales payload sizes so received/sent approaches the planted ratio.
  void adjust_ratio(int flow, double target) {
    flows_[static_cast<std::size_t>(flow)].target_ratio = target;
    double sent = 0, recv = 0;
    std::vector<Event*> host_data, server_data;
    for (auto& e : events_) {
      if (e.flow != flow) continue;
      const double len = wire::wire_length(e.spec);
      const bool out = e.spec.src == host_;
      (out ? sent : recv) += len;
      if (e.kind == Kind::Raw || e.kind == Kind::Tls) (out ? host_data : server_data).push_back(&e);
    }
    if (sent <= 0 || recv <= 0) return;
    auto spread = [](std::vector<Event*>& evs, double extra) {
      if (evs.empty() || extra <= 0) return;
      const double each = extra / double(evs.size());
      for (Event* e : evs) {
        const double v = double(e->spec.virtual_payload) + each;
        e->spec.virtual_payload = static_cast<std::uint32_t>(std::min(v, double(kMaxVirtual)));
      }
    };
    if (recv / sent > target) {
      spread(host_data, recv / target - sent);
    } else {
      spread(server_data, sent * target - recv);
    }
  }

  void legit_flow(const Server& s, std::int64_t w, const std::vector<double>& loads, bool confound) {
    const std::int64_t limit = window_limit(w);
    const int flow = new_flow(s, w, confound);
    const int want = rng_.integer(p_.sessions);
    // Start at one of the page loads inside the window.
    std::vector<double> in_window;
    for (double l : loads) {
      if (l >= double(w) * kLedgerWindow + 1 && us(l) < limit) in_window.push_back(l);
    }
    if (in_window.empty()) return;
    std::size_t li = static_cast<std::size_t>(rng_.integer(0, static_cast<int>(std::min<std::size_t>(in_window.size(), 3)) - 1));
    std::vector<std::string> targets;
    for (int i = 0; i < 4; ++i) targets.push_back(legit_target());
    int done = 0;
    bool first = true;
    while (done < want && li < in_window.size()) {
      const std::size_t mark = events_.size();
      // Confounds start on their own schedule, away from page-load clusters.
      std::int64_t t = us(in_window[li] + (confound ? rng_.uni(5, 90) : rng_.uni(p_.conn_gap)));
      if (first && !s.fqdn.empty()) {
        int q = rng_.chance(0.15) ? rng_.integer(6, static_cast<int>(p_.dns_per_flow.hi))
                                  : rng_.integer(static_cast<int>(p_.dns_per_flow.lo), 3);
        if (confound) q = 1;
        std::int64_t dt = t - us(0.25);
        for (int i = 0; i < q; ++i) dt = dns(flow, s, dt) + us(rng_.uni(0.001, 0.01));
        t = std::max(t, dt);
      }
      const std::uint16_t port = next_port();
      t = handshake(flow, s, port, t);
      if (s.tls) t = tls_hello(flow, s, port, t, false);
      if (confound) {
        if (!s.tls) {
          HttpExchange x;
          x.target = rng_.pick(targets);
          x.resp_ctype = content_type_for(x.target);
          x.resp_body = static_cast<std::uint32_t>(rng_.log_uni(p_.response_bytes));
          t = http(flow, s, port, t, x, 0.0005, 0.004) + us(0.01);
        }
        Range saved = p_.idle;
        p_.idle = {3, 28};
        t = bursts(flow, s, port, t, s.tls, 3.35);
        p_.idle = saved;
      } else {
        const int nr = rng_.integer(p_.requests);
        for (int r = 0; r < nr; ++r) {
          HttpExchange x;
          x.target = rng_.chance(0.5) ? rng_.pick(targets) : legit_target();
          x.resp_ctype = content_type_for(x.target);
          x.resp_body = static_cast<std::uint32_t>(rng_.log_uni(p_.response_bytes));
          if (rng_.chance(p_.failure_prob)) {
            x.status = rng_.chance(0.7) ? 404 : 503;
            x.resp_ctype = "text/html";
            x.resp_body = static_cast<std::uint32_t>(rng_.uni(200, 1200));
          } else if (rng_.chance(0.1)) {
            x.status = 304;
            x.resp_body = 0;
          }
          if (rng_.chance(0.1)) {
            x.method = "POST";
            x.req_ctype = "application/x-www-form-urlencoded";
            x.req_body = static_cast<std::uint32_t>(rng_.uni(100, 2000));
          }
          if (s.tls) {
            tls_record(flow, s, port, t, true, static_cast<std::uint32_t>(rng_.uni(300, 900)));
            std::int64_t now = t + rtt(s);
            std::uint32_t left = std::max<std::uint32_t>(x.resp_body, 100);
            while (left > 0) {
              const std::uint32_t n = std::min(left, kMss - 5);
              tls_record(flow, s, port, now, false, n);
              left -= n;
              now += us(rng_.uni(p_.burst_gap));
            }
            emit(now, tcp(s, port, true, 0x10), Kind::Control, flow);
            t = now + us(rng_.uni(0.005, 0.05));
          } else {
            t = http(flow, s, port, t, x, p_.burst_gap.lo, p_.burst_gap.hi) + us(rng_.uni(0.005, 0.05));
          }
        }
      }
      if (rng_.chance(p_.close_prob)) t = close(flow, s, port, t);
      if (!commit_or_rollback(mark, limit)) break;
      first = false;
      ++done;
      li += 1 + static_cast<std::size_t>(rng_.integer(0, 1));
    }
    if (done > 0) {
      adjust_ratio(flow, confound ? rng_.uni(2.6, 4.2) : rng_.uni(p_.received_sent));
    }
  }

  void schedule_legit() {
    // Quiet hosts: a handful of servers and sparse, irregular activity.
    const bool quiet = rng_.chance(spec_.confound_rate);
    if (quiet) servers_.resize(std::min<std::size_t>(servers_.size(), static_cast<std::size_t>(rng_.integer(3, 8))));
    const Range gaps = quiet ? Range{15, 120} : p_.idle;
    std::vector<double> loads;
    for (double t = rng_.uni(1, 15); t < spec_.duration - 10; t += rng_.uni(gaps)) loads.push_back(t);
    // Windows that begin without a page load still get one near their start.
    for (double w = kLedgerWindow; w < spec_.duration; w += kLedgerWindow) {
      loads.push_back(w + rng_.uni(1, 10));
    }
    std::sort(loads.begin(), loads.end());
    for (const auto& s : servers_) {
      const bool confound = rng_.chance(spec_.confound_rate);
      legit_flow(s, 0, loads, confound);
      for (std::int64_t w = 1; double(w) * kLedgerWindow < spec_.duration; ++w) {
        if (rng_.chance(p_.second_window)) legit_flow(s, w, loads, confound);
      }
    }
  }

  void apt_flow(const Server& s, std::int64_t w, double start) {
    const std::int64_t limit = window_limit(w);
    const int flow = new_flow(s, w, false);
    std::int64_t t = us(start);
    if (s.dead) {
      const std::size_t mark = events_.size();
      if (!s.fqdn.empty()) t = dns(flow, s, t - us(0.1));
      const std::uint16_t port = next_port();
      for (double back : {0.0, 1.0, 3.0}) emit(t + us(back), tcp(s, port, true, 0x02), Kind::Control, flow);
      commit_or_rollback(mark, limit);
      return;
    }
    const int want = rng_.integer(p_.sessions);
    std::vector<std::string> targets = {apt_target(), apt_target()};
    const double ratio = rng_.uni(p_.received_sent);
    int done = 0;
    for (int k = 0; k < want; ++k) {
      const std::size_t mark = events_.size();
      double q = 0;
      if (k == 0 && !s.fqdn.empty()) {
        q = rng_.integer(p_.dns_per_flow);
        std::int64_t dt = t - us(0.2);
        for (int i = 0; i < static_cast<int>(q); ++i) dt = dns(flow, s, dt) + us(0.01);
      }
      const std::uint16_t port = next_port();
      t = handshake(flow, s, port, t);
      if (s.tls) {
        t = tls_hello(flow, s, port, t, true);
      } else if (has(Ttp::WEB_PROTOCOL)) {
        const int nr = rng_.integer(p_.requests);
        for (int r = 0; r < nr; ++r) {
          HttpExchange x;
          x.method = rng_.chance(0.5) ? "GET" : "POST";
          x.target = rng_.pick(targets);
          if (x.method == "POST") {
            x.req_ctype = "application/octet-stream";
            x.req_body = static_cast<std::uint32_t>(rng_.uni(60, 400));
          }
          x.resp_ctype = rng_.chance(p_.html_fraction) ? "text/html"
                                                      : (rng_.chance(0.5) ? "text/plain" : "application/octet-stream");
          if (x.target.find(".exe") != std::string::npos) x.resp_ctype = "application/octet-stream";
          x.resp_body = static_cast<std::uint32_t>(rng_.uni(p_.response_bytes));
          if (rng_.chance(p_.failure_prob)) x.status = 404;
          t = http(flow, s, port, t, x, 0.001, 0.01) + us(rng_.uni(0.05, 0.5));
        }
      }
      const bool non_app = has(Ttp::NON_APP_PROTOCOL) || !s.tls;
      t = bursts(flow, s, port, t, !non_app, ratio);
      if (non_app && p_.raw_tcp_floor > 0) t = raw_floor(flow, s, port, t, q);
      if (rng_.chance(p_.close_prob)) t = close(flow, s, port, t);
      if (!commit_or_rollback(mark, limit)) break;
      ++done;
      t += us(rng_.uni(p_.idle));
    }
    if (done > 0) adjust_ratio(flow, ratio);
    if (done > 0 && non_app_floor_violated(flow)) top_up_after(flow, s);
  }

  bool non_app_floor_violated(int flow) const {
    if (!has(Ttp::NON_APP_PROTOCOL) || p_.raw_tcp_floor <= 0) return false;
    double total = 0, raw_n = 0;
    for (const auto& e : events_) {
      if (e.flow != flow) continue;
      total += 1;
      if (e.kind == Kind::Raw || e.kind == Kind::Control) raw_n += 1;
    }
    return total > 0 && raw_n / total < p_.raw_tcp_floor;
  }

  // Rare case: a rolled-back session left too few raw packets behind.
  void top_up_after(int flow, const Server& s) {
    std::int64_t last = 0;
    std::uint16_t port = 0;
    for (const auto& e : events_) {
      if (e.flow == flow && e.spec.proto == IpProto::TCP) {
        last = std::max(last, e.t_us);
        port = e.spec.src == host_ ? e.spec.src_port : e.spec.dst_port;
      }
    }
    while (non_app_floor_violated(flow)) {
      last += us(rng_.uni(p_.burst_gap));
      if (last >= window_limit(flows_[static_cast<std::size_t>(flow)].window)) break;
      raw(flow, s, port, last, false, static_cast<std::uint32_t>(rng_.uni(40, 300)));
    }
  }

  void botnet_flow(const Server& s, std::int64_t w, double start) {
    const std::int64_t limit = window_limit(w);
    const int flow = new_flow(s, w, false);
    const int want = rng_.integer(p_.sessions);
    const std::string target = bot_target();
    std::int64_t t = us(start);
    int done = 0;
    for (int k = 0; k < want; ++k) {
      const std::size_t mark = events_.size();
      if (!s.fqdn.empty()) {
        const int q = rng_.integer(p_.dns_per_flow);
        std::int64_t dt = t - us(0.3);
        for (int i = 0; i < q; ++i) dt = dns(flow, s, dt) + us(0.02);
      }
      const std::uint16_t port = next_port();
      t = handshake(flow, s, port, t);
      if (s.tls) t = tls_hello(flow, s, port, t, true);
      const int nr = rng_.integer(p_.requests);
      for (int r = 0; r < nr; ++r) {
        HttpExchange x;
        x.method = rng_.chance(0.6) ? "POST" : "GET";
        x.target = target;
        if (x.method == "POST") {
          x.req_ctype = "application/x-www-form-urlencoded";
          x.req_body = static_cast<std::uint32_t>(rng_.uni(200, 900));
        }
        x.resp_ctype = rng_.chance(p_.html_fraction) ? "text/html" : "text/plain";
        x.resp_body = static_cast<std::uint32_t>(rng_.uni(p_.response_bytes));
        if (rng_.chance(p_.failure_prob)) x.status = rng_.chance(0.5) ? 404 : 500;
        if (s.tls) {
          tls_record(flow, s, port, t, true, x.req_body + 300);
          tls_record(flow, s, port, t + rtt(s), false, x.resp_body);
          t += rtt(s) + us(0.01);
        } else {
          t = http(flow, s, port, t, x, 0.001, 0.01) + us(rng_.uni(0.01, 0.2));
        }
      }
      if (rng_.chance(p_.udp_chatter)) {
        for (int i = 0, n = rng_.integer(2, 5); i < n; ++i) {
          wire::FrameSpec u;
          u.proto = IpProto::UDP;
          u.src = i % 2 ? s.ip : host_;
          u.dst = i % 2 ? host_ : s.ip;
          u.src_port = i % 2 ? 16464 : 50000;
          u.dst_port = i % 2 ? 50000 : 16464;
          u.ttl = i % 2 ? s.ttl : 128;
          u.virtual_payload = static_cast<std::uint32_t>(rng_.uni(20, 120));
          t += us(rng_.uni(0.01, 0.1));
          emit(t, std::move(u), Kind::Udp, flow);
        }
      }
      if (rng_.chance(p_.close_prob)) t = close(flow, s, port, t);
      if (!commit_or_rollback(mark, limit)) break;
      ++done;
      t += us(rng_.uni(p_.idle));
    }
    if (done > 0) adjust_ratio(flow, rng_.uni(p_.received_sent));
  }

  void schedule_malicious(Style style) {
    for (std::int64_t w = 0; double(w) * kLedgerWindow < spec_.duration; ++w) {
      double t = double(w) * kLedgerWindow + rng_.uni(2, 20);
      for (std::size_t i = 0; i < servers_.size(); ++i) {
        const Server& s = servers_[i];
        if (w > 0 && (s.dead || !rng_.chance(p_.second_window))) continue;
        if (us(t) >= window_limit(w)) break;
        if (style == Style::Apt) {
          apt_flow(s, w, t);
        } else {
          botnet_flow(s, w, t);
        }
        t += rng_.uni(p_.conn_gap);
      }
    }
  }

  const ScenarioSpec& spec_;
  DistributionParams p_;
  Rng rng_;
  IpAddress host_;
  IpAddress resolver_;
  std::string ua_;
  std::set<IpAddress> used_ips_;
  std::vector<Server> servers_;
  std::vector<FlowTrack> flows_;
  std::vector<Event> events_;
  std::uint64_t seq_ = 0;
  std::uint16_t port_ = 49152;
};

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }
Range range_from(const json& j, Range fallback) {
  if (!j.is_array() || j.size() != 2) return fallback;
  return {j[0].get<double>(), j[1].get<double>()};
}

json params_json(const DistributionParams& p) {
  return {{"servers", range_json(p.servers)},
          {"sessions", range_json(p.sessions)},
          {"dns_per_flow", range_json(p.dns_per_flow)},
          {"received_sent", range_json(p.received_sent)},
          {"conn_gap", range_json(p.conn_gap)},
          {"idle", range_json(p.idle)},
          {"burst_gap", range_json(p.burst_gap)},
          {"burst_packets", range_json(p.burst_packets)},
          {"bursts", range_json(p.bursts)},
          {"requests", range_json(p.requests)},
          {"url_depth", range_json(p.url_depth)},
          {"url_params", range_json(p.url_params)},
          {"response_bytes", range_json(p.response_bytes)},
          {"rtt", range_json(p.rtt)},
          {"raw_tcp_floor", p.raw_tcp_floor},
          {"dns_ratio_cap", p.dns_ratio_cap},
          {"tls_fraction", p.tls_fraction},
          {"ip_only_fraction", p.ip_only_fraction},
          {"second_window", p.second_window},
          {"close_prob", p.close_prob},
          {"failure_prob", p.failure_prob},
          {"html_fraction", p.html_fraction},
          {"image_fraction", p.image_fraction},
          {"udp_chatter", p.udp_chatter}};
}

DistributionParams params_from(const json& j, DistributionParams p) {
  p.servers = range_from(j.value("servers", json()), p.servers);
  p.sessions = range_from(j.value("sessions", json()), p.sessions);
  p.dns_per_flow = range_from(j.value("dns_per_flow", json()), p.dns_per_flow);
  p.received_sent = range_from(j.value("received_sent", json()), p.received_sent);
  p.conn_gap = range_from(j.value("conn_gap", json()), p.conn_gap);
  p.idle = range_from(j.value("idle", json()), p.idle);
  p.burst_gap = range_from(j.value("burst_gap", json()), p.burst_gap);
  p.burst_packets = range_from(j.value("burst_packets", json()), p.burst_packets);
  p.bursts = range_from(j.value("bursts", json()), p.bursts);
  p.requests = range_from(j.value("requests", json()), p.requests);
  p.url_depth = range_from(j.value("url_depth", json()), p.url_depth);
  p.url_params = range_from(j.value("url_params", json()), p.url_params);
  p.response_bytes = range_from(j.value("response_bytes", json()), p.response_bytes);
  p.rtt = range_from(j.value("rtt", json()), p.rtt);
  p.raw_tcp_floor = j.value("raw_tcp_floor", p.raw_tcp_floor);
  p.dns_ratio_cap = j.value("dns_ratio_cap", p.dns_ratio_cap);
  p.tls_fraction = j.value("tls_fraction", p.tls_fraction);
  p.ip_only_fraction = j.value("ip_only_fraction", p.ip_only_fraction);
  p.second_window = j.value("second_window", p.second_window);
  p.close_prob = j.value("close_prob", p.close_prob);
  p.failure_prob = j.value("failure_prob", p.failure_prob);
  p.html_fraction = j.value("html_fraction", p.html_fraction);
  p.image_fraction = j.value("image_fraction", p.image_fraction);
  p.udp_chatter = j.value("udp_chatter", p.udp_chatter);
  return p;
}

std::string ttps_joined(const std::set<Ttp>& ttps) {
  std::string s;
  for (Ttp t : ttps) {
    if (!s.empty()) s += ';';
    s += to_string(t);
  }
  return s;
}

std::string class_name(ClassLabel c) {
  switch (c) {
    case ClassLabel::APT: return "apt";
    case ClassLabel::BOTNET: return "botnet";
    case ClassLabel::LEGITIMATE: return "legitimate";
    default: return "unlabeled";
  }
}

ClassLabel class_from(const std::string& s) {
  auto c = parse_class_label(s);
  if (!c) throw FormatError("unknown class '" + s + "'");
  return *c;
}

}  // namespace

std::string_view to_string(Ttp t) { return kTtpNames[static_cast<std::size_t>(t)]; }

std::optional<Ttp> parse_ttp(std::string_view text) {
  for (std::size_t i = 0; i < kTtpNames.size(); ++i) {
    std::string lower(text);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (kTtpNames[i] == lower) return static_cast<Ttp>(i);
  }
  return std::nullopt;
}

const std::vector<Ttp>& all_ttps() {
  static const std::vector<Ttp> v = {Ttp::FALLBACK_CHANNEL, Ttp::WEB_PROTOCOL,
                                     Ttp::NON_APP_PROTOCOL, Ttp::PROTOCOL_IMPERSONATION,
                                     Ttp::IP_ONLY,          Ttp::ENCRYPTED_CHANNEL};
  return v;
}

DistributionParams class_template(ClassLabel c) {
  DistributionParams p;
  switch (c) {
    case ClassLabel::APT:
      p.servers = {6, 12};
      p.sessions = {1, 2};
      p.dns_per_flow = {0, 2};
      p.received_sent = {2.6, 4.2};
      p.conn_gap = {20, 73.7};
      p.idle = {3, 28};
      p.burst_gap = {0.02, 0.3};
      p.burst_packets = {4, 14};
      p.bursts = {2, 6};
      p.requests = {1, 2};
      p.url_depth = {1, 3};
      p.url_params = {1, 3};
      p.response_bytes = {200, 2000};
      p.rtt = {0.08, 0.3};
      p.raw_tcp_floor = 0.4884;
      p.dns_ratio_cap = 0.19;
      p.tls_fraction = 0.6;
      p.ip_only_fraction = 0.55;
      p.second_window = 0.9;
      p.close_prob = 0.3;
      p.failure_prob = 0.05;
      p.html_fraction = 0.02;
      p.image_fraction = 0;
      break;
    case ClassLabel::BOTNET:
      p.servers = {8, 16};
      p.sessions = {3, 8};
      p.dns_per_flow = {1, 2};
      p.received_sent = {0.5, 1.0};
      p.conn_gap = {5, 38.5};
      p.idle = {10, 84};
      p.burst_gap = {0.01, 0.05};
      p.burst_packets = {2, 4};
      p.bursts = {1, 1};
      p.requests = {1, 2};
      p.url_depth = {0, 1};
      p.url_params = {1, 1};
      p.response_bytes = {100, 700};
      p.rtt = {0.05, 0.2};
      p.dns_ratio_cap = 0.46;
      p.tls_fraction = 0.05;
      p.ip_only_fraction = 0.09;
      p.second_window = 0.8;
      p.close_prob = 0.95;
      p.failure_prob = 0.25;
      p.html_fraction = 0.98;
      p.udp_chatter = 0.4;
      break;
    default:
      p.servers = {24, 38};
      p.sessions = {1, 4};
      p.dns_per_flow = {1, 18};
      p.received_sent = {0.9, 2.4};
      p.conn_gap = {0.05, 1.1};
      p.idle = {20, 184};
      p.burst_gap = {0.0005, 0.01};
      p.burst_packets = {4, 10};
      p.bursts = {2, 5};
      p.requests = {1, 5};
      p.url_depth = {0, 4};
      p.url_params = {0, 7};
      p.response_bytes = {600, 20000};
      p.rtt = {0.01, 0.06};
      p.dns_ratio_cap = 0.38;
      p.tls_fraction = 0.5;
      p.ip_only_fraction = 0.01;
      p.second_window = 0.5;
      p.close_prob = 0.85;
      p.failure_prob = 0.03;
      p.html_fraction = 0.1;
      p.image_fraction = 0.3;
      break;
  }
  return p;
}

json template_table_json() {
  json rows = json::array();
  auto row = [&](const char* param, const char* apt, const char* botnet, const char* legit,
                 const char* anchor) {
    rows.push_back({{"parameter", param}, {"apt", apt}, {"botnet", botnet}, {"legitimate", legit},
                    {"anchor", anchor}});
  };
  row("dns ratio cap", "0.19", "0.46", "0.38", "95.2% of APTs stay at or below 0.19 DNS ratio");
  row("dns requests per flow", "0-2", "1-2 per session", "1-18",
      "legitimate traffic generates up to 18 requests; 84% of malicious issue 2 or 6 at most");
  row("raw TCP ratio floor", "0.4884", "-", "-", "an APT raw TCP ratio below 48.84% is extremely rare");
  row("received/sent", "2.6-4.2", "0.5-1.0", "0.9-2.4", "3.35, 1.45 and 0.75 times");
  row("idle between bursts (s)", "3-28", "10-84", "20-184", "92% at most 28, 84 and 184 seconds");
  row("connection start gap (s)", "20-73.7", "5-38.5", "0.05-1.1", "MTDSC up to 73.7, 38.5 and 1.1 seconds");
  row("sessions closed", "30%", "95%", "85%", "APTs terminate roughly 50% less");
  row("HTTP failures", "5%", "25%", "3%", "botnets receive as many as five failures");
  row("declared HTML", "2%", "98%", "10%", "2%, 2% and 98% of the time");
  row("images", "0", "0", "up to 30%", "70% of legitimate declare images 30% at most");
  row("URL depth", "1-3", "0-1", "0-4", "3, 1 and 4 nested folders");
  row("URL params", "1-3", "1", "0-7", "3, 1 and 7 parameters");
  row("IP-only servers", "55% with the IP-only TTP", "9%", "1%", "32% of C&C with IP only; 9% and 1%");
  row("legitimate confounds", "-", "-", "20% of flows with APT timing", "configurable overlap rate");
  return {{"rows", rows},
          {"apt", params_json(class_template(ClassLabel::APT))},
          {"botnet", params_json(class_template(ClassLabel::BOTNET))},
          {"legitimate", params_json(class_template(ClassLabel::LEGITIMATE))}};
}

json to_json(const ScenarioSpec& s) {
  json ttps = json::array();
  for (Ttp t : s.ttps) ttps.push_back(to_string(t));
  return {{"name", s.name},
          {"class", class_name(s.label)},
          {"ttps", ttps},
          {"seed", s.seed},
          {"duration", s.duration},
          {"confound_rate", s.confound_rate},
          {"pcapng", s.pcapng},
          {"params", params_json(s.params)}};
}

ScenarioSpec scenario_from_json(const json& j) {
  ScenarioSpec s;
  s.name = j.at("name").get<std::string>();
  s.label = class_from(j.at("class").get<std::string>());
  if (s.label == ClassLabel::UNLABELED) throw ConfigError("scenario class must be apt, botnet or legitimate");
  for (const auto& t : j.value("ttps", json::array())) {
    auto ttp = parse_ttp(t.get<std::string>());
    if (!ttp) throw ConfigError("unknown TTP '" + t.get<std::string>() + "'");
    s.ttps.insert(*ttp);
  }
  s.seed = j.value("seed", std::uint64_t{0});
  s.duration = j.value("duration", 900.0);
  s.confound_rate = j.value("confound_rate", s.label == ClassLabel::LEGITIMATE ? 0.2 : 0.0);
  s.pcapng = j.value("pcapng", false);
  s.params = params_from(j.value("params", json::object()), class_template(s.label));
  if (!(s.duration > 0)) throw ConfigError("scenario duration must be positive");
  return s;
}

std::vector<ScenarioSpec> default_corpus(std::uint64_t seed, const CorpusOptions& opt) {
  std::vector<ScenarioSpec> out;
  Rng rng(mix64(seed));
  auto add = [&](ClassLabel c, int i) {
    ScenarioSpec s;
    char name[32];
    std::snprintf(name, sizeof name, "%s-%04d", class_name(c).c_str(), i);
    s.name = name;
    s.label = c;
    s.params = class_template(c);
    s.seed = mix64(seed ^ hash_str(s.name));
    s.duration = opt.duration;
    s.pcapng = i % 3 == 2;
    if (c == ClassLabel::APT) {
      if (rng.chance(0.85)) s.ttps.insert(Ttp::NON_APP_PROTOCOL);
      if (rng.chance(0.8)) s.ttps.insert(Ttp::WEB_PROTOCOL);
      if (rng.chance(0.35)) s.ttps.insert(Ttp::ENCRYPTED_CHANNEL);
      if (rng.chance(0.58)) s.ttps.insert(Ttp::IP_ONLY);
      if (rng.chance(0.5)) s.ttps.insert(Ttp::FALLBACK_CHANNEL);
      if (rng.chance(0.5)) s.ttps.insert(Ttp::PROTOCOL_IMPERSONATION);
    } else if (c == ClassLabel::BOTNET) {
      s.ttps.insert(Ttp::WEB_PROTOCOL);
      if (rng.chance(0.2)) s.ttps.insert(Ttp::IP_ONLY);
    } else {
      s.confound_rate = opt.confound_rate;
    }
    out.push_back(std::move(s));
  };
  for (int i = 0; i < opt.n_apt; ++i) add(ClassLabel::APT, i);
  for (int i = 0; i < opt.n_botnet; ++i) add(ClassLabel::BOTNET, i);
  for (int i = 0; i < opt.n_legitimate; ++i) add(ClassLabel::LEGITIMATE, i);
  return out;
}

std::vector<ScenarioSpec> specs_from_json(const json& j, std::uint64_t seed) {
  try {
    if (j.contains("scenarios")) {
      std::vector<ScenarioSpec> out;
      std::set<std::string> names;
      for (const auto& s : j["scenarios"]) {
        ScenarioSpec spec = scenario_from_json(s);
        if (!s.contains("seed")) spec.seed = mix64(seed ^ hash_str(spec.name));
        if (!names.insert(spec.name).second) throw ConfigError("duplicate scenario name " + spec.name);
        out.push_back(std::move(spec));
      }
      if (out.empty()) throw ConfigError("spec lists no scenarios");
      return out;
    }
    const json c = j.value("corpus", json::object());
    CorpusOptions opt;
    opt.n_apt = c.value("apt", opt.n_apt);
    opt.n_botnet = c.value("botnet", opt.n_botnet);
    opt.n_legitimate = c.value("legitimate", opt.n_legitimate);
    opt.confound_rate = c.value("confound_rate", opt.confound_rate);
    opt.duration = c.value("duration", opt.duration);
    if (opt.n_apt + opt.n_botnet + opt.n_legitimate <= 0) throw ConfigError("corpus is empty");
    return default_corpus(j.value("seed", seed), opt);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
}

json to_json(const PlantedFlow& f) {
  json ttps = json::array();
  for (Ttp t : f.ttps) ttps.push_back(to_string(t));
  return {{"capture", f.capture},
          {"class", class_name(f.label)},
          {"ttps", ttps},
          {"confound", f.confound},
          {"source", f.source},
          {"destination", f.destination},
          {"window", f.window},
          {"expect", f.expect},
          {"packets", f.packets},
          {"bytes_sent", f.bytes_sent},
          {"bytes_received", f.bytes_received},
          {"n_raw_tcp", f.n_raw_tcp},
          {"n_data_packets", f.n_data_packets},
          {"raw_tcp_ratio", f.raw_tcp_ratio()},
          {"dns_requests", f.dns_requests},
          {"fin_ack", f.fin_ack},
          {"ip_only", f.ip_only},
          {"idle_max", f.idle_max},
          {"idle_min", f.idle_min},
          {"delta_mean", f.delta_mean},
          {"target_received_sent", f.target_received_sent},
          {"urls", f.urls}};
}

PlantedFlow planted_flow_from_json(const json& j) {
  try {
    PlantedFlow f;
    f.capture = j.at("capture").get<std::string>();
    f.label = class_from(j.at("class").get<std::string>());
    for (const auto& t : j.value("ttps", json::array())) {
      if (auto ttp = parse_ttp(t.get<std::string>())) f.ttps.insert(*ttp);
    }
    f.confound = j.value("confound", false);
    f.source = j.at("source").get<std::string>();
    f.destination = j.at("destination").get<std::string>();
    f.window = j.at("window").get<std::int64_t>();
    f.expect = j.value("expect", "kept");
    f.packets = j.at("packets").get<std::int64_t>();
    f.bytes_sent = j.at("bytes_sent").get<double>();
    f.bytes_received = j.at("bytes_received").get<double>();
    f.n_raw_tcp = j.at("n_raw_tcp").get<std::int64_t>();
    f.n_data_packets = j.value("n_data_packets", std::int64_t{0});
    f.dns_requests = j.at("dns_requests").get<std::int64_t>();
    f.fin_ack = j.value("fin_ack", std::int64_t{0});
    f.ip_only = j.at("ip_only").get<bool>();
    f.idle_max = j.value("idle_max", 0.0);
    f.idle_min = j.value("idle_min", 0.0);
    f.delta_mean = j.value("delta_mean", 0.0);
    f.target_received_sent = j.value("target_received_sent", 0.0);
    f.urls = j.value("urls", std::vector<std::string>{});
    return f;
  } catch (const json::exception& e) {
    throw FormatError(std::string("ledger: ") + e.what());
  }
}

SynthCapture generate_capture(const ScenarioSpec& spec, const std::filesystem::path& out_dir,
                              std::vector<PlantedFlow>& flows,
                              std::map<std::string, double>& domain_ages) {
  CaptureBuilder b(spec);
  b.build();
  SynthCapture c;
  c.name = spec.name;
  c.path = out_dir / (spec.name + (spec.pcapng ? ".pcapng" : ".pcap"));
  c.label = spec.label;
  c.ttps = spec.ttps;
  c.seed = spec.seed;
  c.confound_rate = spec.confound_rate;
  c.packets = b.write(c.path);
  b.ledger(flows);
  b.domain_ages(domain_ages);
  return c;
}

PlantLedger generate_corpus(const std::vector<ScenarioSpec>& specs,
                            const std::filesystem::path& out_dir, int threads) {
  if (specs.empty()) throw ConfigError("no scenarios to generate");
  std::filesystem::create_directories(out_dir);
  struct Result {
    SynthCapture capture;
    std::vector<PlantedFlow> flows;
    std::map<std::string, double> ages;
  };
  std::vector<Result> results(specs.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  unsigned n = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  n = std::min<unsigned>(n, static_cast<unsigned>(specs.size()));
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < n; ++i) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < specs.size(); k = next++) {
        try {
          results[k].capture = generate_capture(specs[k], out_dir, results[k].flows, results[k].ages);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);

  PlantLedger ledger;
  std::map<std::string, double> ages;
  for (auto& r : results) {
    ledger.captures.push_back(r.capture);
    for (auto& f : r.flows) ledger.flows.push_back(std::move(f));
    for (const auto& [k, v] : r.ages) ages.emplace(k, v);
  }

  std::ofstream lj(out_dir / "ledger.jsonl", std::ios::trunc);
  for (const auto& f : ledger.flows) lj << to_json(f).dump() << '\n';
  std::ofstream lc(out_dir / "labels.csv", std::ios::trunc);
  lc << "capture,class,ttps,seed,confound_rate\n";
  for (const auto& c : ledger.captures) {
    lc << c.name << ',' << class_name(c.label) << ',' << ttps_joined(c.ttps) << ',' << c.seed << ','
       << c.confound_rate << '\n';
  }
  std::ofstream da(out_dir / "domain_ages.txt", std::ios::trunc);
  for (const auto& [fqdn, age] : ages) da << fqdn << ' ' << age << '\n';
  if (!lj || !lc || !da) throw DataError("failed writing corpus metadata in " + out_dir.string());
  return ledger;
}

PlantLedger read_ledger(const std::filesystem::path& dir) {
  PlantLedger ledger;
  std::ifstream in(dir / "ledger.jsonl");
  if (!in) throw FileNotFound((dir / "ledger.jsonl").string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      ledger.flows.push_back(planted_flow_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("ledger: ") + e.what());
    }
  }
  for (const auto& [name, row] : read_labels(dir / "labels.csv")) {
    SynthCapture c;
    c.name = name;
    c.label = row.label;
    c.ttps = row.ttps;
    ledger.captures.push_back(std::move(c));
  }
  return ledger;
}

std::map<std::string, LabelRow> read_labels(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw FileNotFound(csv.string());
  std::map<std::string, LabelRow> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("capture,", 0) == 0) continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() < 2) throw FormatError("labels.csv: expected capture,class");
    LabelRow row;
    row.capture = cols[0];
    auto label = parse_class_label(cols[1]);
    if (!label) throw FormatError("labels.csv: unknown class '" + cols[1] + "'");
    row.label = *label;
    if (cols.size() > 2) {
      std::stringstream ts(cols[2]);
      std::string t;
      while (std::getline(ts, t, ';')) {
        if (auto ttp = parse_ttp(t)) row.ttps.insert(*ttp);
      }
    }
    out[row.capture] = std::move(row);
  }
  return out;
}

}  // namespace ctxflow
