#include "packets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ctxflow/dissect.hpp"
#include "ctxflow/pcap_io.hpp"

namespace testsupport {

using namespace ctxflow;

IpAddress ip(const char* text) {
  auto a = IpAddress::parse(text);
  if (!a) throw std::invalid_argument(std::string("bad address ") + text);
  return *a;
}

RawPacket decode(const FrameSpec& spec, double ts, std::uint64_t index) {
  const auto bytes = wire::ethernet_frame(spec);
  auto r = dissect_frame(bytes, linktype::kEthernet, wire::wire_length(spec));
  if (!r.packet) throw std::runtime_error("test frame did not decode");
  r.packet->timestamp = ts;
  r.packet->packet_index = index;
  return *r.packet;
}

FrameSpec tcp(const IpAddress& src, const IpAddress& dst, std::uint16_t sport,
              std::uint16_t dport, std::uint8_t flags, std::uint32_t payload) {
  FrameSpec f;
  f.src = src;
  f.dst = dst;
  f.src_port = sport;
  f.dst_port = dport;
  f.tcp_flags = flags;
  f.payload.assign(payload, 0x5a);
  return f;
}

FrameSpec http_get(const IpAddress& src, const IpAddress& dst, const std::string& host,
                   const std::string& target, const std::string& ua) {
  FrameSpec f = tcp(src, dst, 40000, 80, tcp_flag::kPsh | tcp_flag::kAck);
  f.payload = wire::http_request("GET", host, target, ua, "", 0);
  return f;
}

FrameSpec http_reply(const IpAddress& src, const IpAddress& dst, int status,
                     const std::string& content_type, std::size_t body) {
  FrameSpec f = tcp(src, dst, 80, 40000, tcp_flag::kPsh | tcp_flag::kAck);
  f.payload = wire::http_response(status, "srv", content_type, body);
  return f;
}

FrameSpec dns_req(const IpAddress& host, const IpAddress& resolver, std::uint16_t id,
                  const std::string& qname) {
  FrameSpec f;
  f.src = host;
  f.dst = resolver;
  f.proto = IpProto::UDP;
  f.src_port = 5353;
  f.dst_port = 53;
  f.payload = wire::dns_query(id, qname);
  return f;
}

FrameSpec dns_resp(const IpAddress& resolver, const IpAddress& host, std::uint16_t id,
                   const std::string& qname, const std::vector<IpAddress>& answers) {
  FrameSpec f;
  f.src = resolver;
  f.dst = host;
  f.proto = IpProto::UDP;
  f.src_port = 53;
  f.dst_port = 5353;
  f.payload = wire::dns_response(id, qname, answers, {"ns1." + qname});
  return f;
}

Trace& Trace::add(const FrameSpec& spec, double ts) {
  packets_.push_back(decode(spec, ts, packets_.size() + 1));
  frames_.emplace_back(ts, spec);
  return *this;
}

void Trace::write_pcap(const std::filesystem::path& path, bool pcapng) const {
  auto ns = [](double ts) { return static_cast<std::int64_t>(std::llround(ts * 1e9)); };
  if (pcapng) {
    PcapngWriter w(path, linktype::kEthernet);
    for (const auto& [ts, spec] : frames_) w.write(ns(ts), wire::ethernet_frame(spec), wire::wire_length(spec));
    w.flush();
  } else {
    PcapWriter w(path, linktype::kEthernet);
    for (const auto& [ts, spec] : frames_) w.write(ns(ts), wire::ethernet_frame(spec), wire::wire_length(spec));
    w.flush();
  }
}

namespace {

const char* kUas[] = {"Mozilla/5.0 (X11)", "Mozilla/5.0 (Windows NT 10.0)", "curl/8.1",
                      "Wget/1.21", "bot-agent"};
const char* kTypes[] = {"text/html", "image/png", "application/javascript", "text/plain",
                        "video/mp4", "application/octet-stream"};
const char* kTargets[] = {"/", "/index.html", "/a/b/c.exe?x=1", "/img/logo.png",
                          "/api/v1/items?id=3&q=%20x", "/dl/tool.EXE", "/x/y/#frag1#f2",
                          "/search?q=1&p=&z=2"};

std::string name_for(const IpAddress& a) {
  std::string s = a.to_string();
  std::replace(s.begin(), s.end(), '.', '-');
  std::replace(s.begin(), s.end(), ':', '-');
  return "h" + s + ".example";
}

}  // namespace

std::vector<RawPacket> RandomTraffic::generate(std::mt19937_64& rng, std::size_t n) const {
  std::uniform_real_distribution<double> uni(0, 1);
  std::uniform_int_distribution<std::size_t> ph(0, hosts.size() - 1), ps(0, servers.size() - 1);
  std::vector<double> ts(n);
  for (auto& t : ts) t = uni(rng) * span;
  std::sort(ts.begin(), ts.end());

  std::vector<RawPacket> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RawPacket p;
    p.packet_index = i + 1;
    p.timestamp = ts[i];
    const IpAddress h = hosts[ph(rng)];
    const IpAddress s = servers[ps(rng)];
    const bool out_dir = uni(rng) < 0.5;
    p.src_addr = out_dir ? h : s;
    p.dst_addr = out_dir ? s : h;
    p.ttl = static_cast<std::uint8_t>(32 + rng() % 96);
    const double r = uni(rng);
    if (r < 0.30) {
      p.ip_proto = IpProto::TCP;
      static const std::uint8_t flags[] = {0x02, 0x12, 0x10, 0x11, 0x04, 0x18};
      p.tcp_flags = flags[rng() % 6];
      p.length = 54 + static_cast<std::uint32_t>(rng() % 12);
    } else if (r < 0.55) {
      p.ip_proto = IpProto::TCP;
      p.tcp_flags = 0x18;
      p.payload_length = 1 + static_cast<std::uint32_t>(rng() % 1400);
      p.length = 54 + p.payload_length;
    } else if (r < 0.75) {
      p.ip_proto = IpProto::TCP;
      p.tcp_flags = 0x18;
      ApplicationMeta m;
      if (out_dir) {
        m.kind = AppKind::HTTP_REQUEST;
        m.http_method = uni(rng) < 0.8 ? "GET" : "POST";
        const std::string host = uni(rng) < 0.6 ? name_for(s) : s.to_string();
        m.url = host + kTargets[rng() % 8];
        if (uni(rng) < 0.9) m.user_agent = kUas[rng() % 5];
      } else {
        m.kind = AppKind::HTTP_RESPONSE;
        static const int codes[] = {200, 200, 204, 301, 404, 500, 503};
        m.http_status = codes[rng() % 7];
        if (uni(rng) < 0.85) {
          m.content_type = kTypes[rng() % 6];
          m.content_length = rng() % 50000;
        }
      }
      p.payload_length = 100 + static_cast<std::uint32_t>(rng() % 600);
      p.length = 54 + p.payload_length;
      p.app_meta = m;
    } else if (r < 0.82) {
      p.ip_proto = IpProto::TCP;
      p.tcp_flags = 0x18;
      ApplicationMeta m;
      m.kind = uni(rng) < 0.3 ? AppKind::TLS_HANDSHAKE : AppKind::TLS_APPDATA;
      m.tls_record_version = uni(rng) < 0.9 ? 0x0303 : 0x0300;
      p.payload_length = 40 + static_cast<std::uint32_t>(rng() % 1400);
      p.length = 54 + p.payload_length;
      p.app_meta = m;
    } else if (r < 0.92) {
      // DNS between the host and the resolver about this server.
      p.ip_proto = IpProto::UDP;
      ApplicationMeta m;
      m.dns_qname = name_for(s);
      if (uni(rng) < 0.5) {
        m.kind = AppKind::DNS_REQUEST;
        p.src_addr = h;
        p.dst_addr = resolver;
      } else {
        m.kind = AppKind::DNS_RESPONSE;
        p.src_addr = resolver;
        p.dst_addr = h;
        m.dns_answers.push_back({"A", s.to_string()});
        if (uni(rng) < 0.3) m.dns_answers.push_back({"A", servers[ps(rng)].to_string()});
        m.dns_answers.push_back({"NS", "ns." + *m.dns_qname});
      }
      p.src_port = 53;
      p.dst_port = 53;
      p.payload_length = 30 + static_cast<std::uint32_t>(rng() % 80);
      p.length = 42 + p.payload_length;
      p.app_meta = m;
    } else if (r < 0.96) {
      p.ip_proto = IpProto::UDP;
      p.payload_length = static_cast<std::uint32_t>(rng() % 500);
      p.length = 42 + p.payload_length;
    } else {
      p.ip_proto = IpProto::ICMP;
      p.icmp_type = 8;
      p.icmp_code = 0;
      p.length = 98;
    }
    if (p.ip_proto == IpProto::TCP) {
      p.src_port = out_dir ? 40000 : 80;
      p.dst_port = out_dir ? 80 : 40000;
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PairFlow> random_flows(std::mt19937_64& rng, std::size_t n_flows,
                                   const std::string& capture) {
  RandomTraffic gen;
  for (int i = 1; i <= 6; ++i) gen.hosts.push_back(IpAddress::v4(0x0a000100u + static_cast<std::uint32_t>(i)));
  for (int i = 1; i <= 9; ++i) gen.servers.push_back(IpAddress::v4(0xc6336400u + static_cast<std::uint32_t>(i)));

  std::vector<PairFlow> flows;
  std::int64_t cs = 0;
  while (flows.size() < n_flows) {
    const IpAddress h = gen.hosts[rng() % gen.hosts.size()];
    const IpAddress s = gen.servers[rng() % gen.servers.size()];
    RandomTraffic one = gen;
    one.hosts = {h};
    one.servers = {s};
    auto pkts = one.generate(rng, 2 + rng() % 60);
    const PairKey key{capture, h, s};
    // DNS packets stay only when they involve the pair's host.
    std::erase_if(pkts, [&](const RawPacket& p) {
      return p.is_dns() && p.src_addr != h && p.dst_addr != h;
    });
    if (pkts.empty()) continue;
    flows.push_back(encapsulate(FlowId{cs++, 0}, key, pkts, {0, one.span}));
  }
  return flows;
}

std::vector<PlanePoint> random_data_plane(std::mt19937_64& rng, std::size_t n, double span) {
  std::uniform_real_distribution<double> uni(0, span);
  std::vector<double> ts(n);
  for (auto& t : ts) t = uni(rng);
  std::sort(ts.begin(), ts.end());
  std::vector<PlanePoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    PlanePoint p;
    p.packet_index = i + 1;
    p.tag = "TCP";
    p.timestamp = ts[i];
    p.length = 60 + static_cast<std::uint32_t>(rng() % 1500);
    pts.push_back(p);
  }
  return pts;
}

}  // namespace testsupport
