#include "ctxflow/dissect.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>

namespace ctxflow {
namespace {

using Bytes = std::span<const std::uint8_t>;

std::uint16_t be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}
std::uint32_t be24(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 16) | (std::uint32_t{p[1]} << 8) | p[2];
}

std::string hex16(std::uint16_t v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%04x", v);
  return buf;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

constexpr std::string_view kMethods[] = {"GET",     "POST",  "HEAD",
                                         "PUT",     "DELETE", "OPTIONS",
                                         "CONNECT", "TRACE", "PATCH"};

// ---- DNS -----------------------------------------------------------------

// Reads a possibly compressed name starting at `off`; advances `off` past the
// in-place encoding.
bool read_dns_name(Bytes msg, std::size_t& off, std::string& out) {
  out.clear();
  std::size_t pos = off;
  bool jumped = false;
  int hops = 0;
  for (;;) {
    if (pos >= msg.size()) return false;
    const std::uint8_t len = msg[pos];
    if ((len & 0xc0) == 0xc0) {
      if (pos + 1 >= msg.size() || ++hops > 32) return false;
      const std::size_t target = ((len & 0x3fu) << 8) | msg[pos + 1];
      if (!jumped) off = pos + 2;
      jumped = true;
      pos = target;
      continue;
    }
    if (len == 0) {
      if (!jumped) off = pos + 1;
      return true;
    }
    if (pos + 1 + len > msg.size()) return false;
    if (!out.empty()) out += '.';
    out.append(reinterpret_cast<const char*>(msg.data() + pos + 1), len);
    pos += 1 + len;
  }
}

std::string record_type_name(std::uint16_t type) {
  switch (type) {
    case 1: return "A";
    case 2: return "NS";
    case 5: return "CNAME";
    case 6: return "SOA";
    case 12: return "PTR";
    case 15: return "MX";
    case 16: return "TXT";
    case 28: return "AAAA";
    default: return "TYPE" + std::to_string(type);
  }
}

// ---- TLS -----------------------------------------------------------------

struct Reader {
  Bytes b;
  std::size_t off = 0;
  bool ok = true;

  bool need(std::size_t n) {
    if (!ok || off + n > b.size()) ok = false;
    return ok;
  }
  std::uint8_t u8() { return need(1) ? b[off++] : 0; }
  std::uint16_t u16() {
    if (!need(2)) return 0;
    const auto v = be16(b.data() + off);
    off += 2;
    return v;
  }
  Bytes take(std::size_t n) {
    if (!need(n)) return {};
    Bytes s = b.subspan(off, n);
    off += n;
    return s;
  }
};

void parse_extensions(Bytes block, TlsMeta& meta,
                      std::optional<std::string>& sni) {
  Reader r{block};
  while (r.ok && r.off + 4 <= block.size()) {
    const std::uint16_t type = r.u16();
    const std::uint16_t len = r.u16();
    Bytes data = r.take(len);
    if (!r.ok) break;
    meta.extension_types.push_back(hex16(type));
    Reader e{data};
    switch (type) {
      case 0: {  // server_name
        e.u16();
        while (e.ok && e.off + 3 <= data.size()) {
          const std::uint8_t name_type = e.u8();
          const std::uint16_t n = e.u16();
          Bytes name = e.take(n);
          if (e.ok && name_type == 0) {
            sni = std::string(name.begin(), name.end());
          }
        }
        break;
      }
      case 10: {  // supported_groups
        const std::uint16_t n = e.u16();
        for (std::size_t i = 0; e.ok && i + 2 <= n; i += 2) {
          meta.supported_groups.push_back(hex16(e.u16()));
        }
        break;
      }
      case 11: {  // ec_point_formats
        const std::uint8_t n = e.u8();
        for (std::size_t i = 0; e.ok && i < n; ++i) {
          meta.ec_point_formats.push_back(std::to_string(e.u8()));
        }
        break;
      }
      case 13: {  // signature_algorithms
        const std::uint16_t n = e.u16();
        for (std::size_t i = 0; e.ok && i + 2 <= n; i += 2) {
          meta.signature_algorithms.push_back(hex16(e.u16()));
        }
        break;
      }
      case 16: {  // ALPN
        const std::uint16_t n = e.u16();
        const std::size_t end = std::min<std::size_t>(data.size(), 2u + n);
        while (e.ok && e.off < end) {
          const std::uint8_t pl = e.u8();
          Bytes proto = e.take(pl);
          if (e.ok) meta.alpn_protocols.emplace_back(proto.begin(), proto.end());
        }
        break;
      }
      default:
        break;
    }
  }
}

bool looks_like_tls_record(Bytes p) {
  if (p.size() < 5) return false;
  const std::uint8_t type = p[0];
  if (type < 20 || type > 23) return false;
  if (p[1] != 3 || p[2] > 4) return false;
  return be16(p.data() + 3) <= (1u << 14) + 2048;
}

void qualify_bare_target(std::optional<ApplicationMeta>& meta, const RawPacket& pkt) {
  if (meta && meta->kind == AppKind::HTTP_REQUEST && meta->url &&
      !meta->url->empty() && meta->url->front() == '/') {
    std::string host = pkt.dst_addr.to_string();
    if (pkt.dst_addr.is_v6()) host = "[" + host + "]";
    *meta->url = host + *meta->url;
  }
}

}  // namespace

std::optional<ApplicationMeta> parse_http(Bytes payload) {
  const std::size_t limit = std::min<std::size_t>(payload.size(), 16384);
  std::string_view text(reinterpret_cast<const char*>(payload.data()), limit);
  const std::size_t eol = text.find("\r\n");
  std::string_view first = text.substr(0, eol == std::string_view::npos ? text.size() : eol);

  ApplicationMeta meta;
  if (first.starts_with("HTTP/1.") || first.starts_with("HTTP/2")) {
    const std::size_t sp = first.find(' ');
    if (sp == std::string_view::npos || sp + 4 > first.size()) return std::nullopt;
    int status = 0;
    auto [ptr, ec] = std::from_chars(first.data() + sp + 1, first.data() + sp + 4, status);
    if (ec != std::errc{} || ptr != first.data() + sp + 4 || status < 100 || status > 999) {
      return std::nullopt;
    }
    meta.kind = AppKind::HTTP_RESPONSE;
    meta.http_status = status;
  } else {
    const std::size_t sp1 = first.find(' ');
    if (sp1 == std::string_view::npos) return std::nullopt;
    const std::string_view method = first.substr(0, sp1);
    if (std::find(std::begin(kMethods), std::end(kMethods), method) == std::end(kMethods)) {
      return std::nullopt;
    }
    const std::size_t sp2 = first.find(' ', sp1 + 1);
    if (sp2 == std::string_view::npos) return std::nullopt;
    if (!first.substr(sp2 + 1).starts_with("HTTP/")) return std::nullopt;
    meta.kind = AppKind::HTTP_REQUEST;
    meta.http_method = std::string(method);
    meta.url = std::string(first.substr(sp1 + 1, sp2 - sp1 - 1));
  }

  std::optional<std::string> host;
  std::size_t pos = eol == std::string_view::npos ? text.size() : eol + 2;
  while (pos < text.size()) {
    const std::size_t end = text.find("\r\n", pos);
    const std::string_view line =
        text.substr(pos, end == std::string_view::npos ? text.size() - pos : end - pos);
    if (line.empty()) break;
    const std::size_t colon = line.find(':');
    if (colon != std::string_view::npos) {
      const std::string_view name = trim(line.substr(0, colon));
      const std::string_view value = trim(line.substr(colon + 1));
      if (iequals(name, "host")) {
        host = std::string(value);
      } else if (iequals(name, "user-agent")) {
        meta.user_agent = std::string(value);
      } else if (iequals(name, "content-type")) {
        meta.content_type = lower(trim(value.substr(0, value.find(';'))));
      } else if (iequals(name, "content-length")) {
        std::uint64_t n = 0;
        auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
        if (ec == std::errc{}) meta.content_length = n;
      } else if (iequals(name, "server")) {
        meta.server_name = std::string(value);
      }
    }
    if (end == std::string_view::npos) break;
    pos = end + 2;
  }

  if (meta.kind == AppKind::HTTP_REQUEST) {
    std::string target = *meta.url;
    if (auto scheme = target.find("://"); scheme != std::string::npos &&
                                          scheme < target.find('/')) {
      *meta.url = target.substr(scheme + 3);  // absolute-form (proxy) request
    } else if (host && !target.empty() && target.front() == '/') {
      *meta.url = *host + target;
    } else if (host && target == "*") {
      *meta.url = *host;
    }
  }
  return meta;
}

std::optional<ApplicationMeta> parse_dns(Bytes p) {
  if (p.size() < 12) return std::nullopt;
  const std::uint16_t flags = be16(p.data() + 2);
  const std::uint16_t qd = be16(p.data() + 4);
  const std::uint16_t an = be16(p.data() + 6);
  const std::uint16_t ns = be16(p.data() + 8);

  ApplicationMeta meta;
  const bool response = (flags & 0x8000) != 0;
  meta.kind = response ? AppKind::DNS_RESPONSE : AppKind::DNS_REQUEST;

  std::size_t off = 12;
  std::string name;
  for (std::uint16_t i = 0; i < qd; ++i) {
    if (!read_dns_name(p, off, name) || off + 4 > p.size()) return std::nullopt;
    off += 4;
    if (i == 0) meta.dns_qname = lower(name);
  }
  if (!response) return meta;

  const int records = an + ns;
  for (int i = 0; i < records; ++i) {
    if (!read_dns_name(p, off, name) || off + 10 > p.size()) break;
    const std::uint16_t type = be16(p.data() + off);
    const std::uint16_t rdlen = be16(p.data() + off + 8);
    off += 10;
    if (off + rdlen > p.size()) break;
    Bytes rdata = p.subspan(off, rdlen);
    DnsAnswer a;
    a.record_type = record_type_name(type);
    if (type == 1 && rdlen == 4) {
      a.value = IpAddress::v4(std::span<const std::uint8_t, 4>(rdata.data(), 4)).to_string();
    } else if (type == 28 && rdlen == 16) {
      a.value = IpAddress::v6(std::span<const std::uint8_t, 16>(rdata.data(), 16)).to_string();
    } else if (type == 2 || type == 5 || type == 12) {
      std::size_t roff = off;
      if (!read_dns_name(p, roff, a.value)) break;
      a.value = lower(a.value);
    } else {
      a.value.clear();
    }
    meta.dns_answers.push_back(std::move(a));
    off += rdlen;
  }
  return meta;
}

std::optional<ApplicationMeta> parse_tls(Bytes p) {
  if (!looks_like_tls_record(p)) return std::nullopt;
  ApplicationMeta meta;
  meta.tls_record_version = be16(p.data() + 1);
  if (p[0] != 22) {
    meta.kind = AppKind::TLS_APPDATA;
    return meta;
  }
  meta.kind = AppKind::TLS_HANDSHAKE;
  Bytes body = p.subspan(5);
  if (body.size() < 4) return meta;
  const std::uint8_t hs_type = body[0];
  const std::uint32_t hs_len = be24(body.data() + 1);
  if (hs_type != 1 && hs_type != 2) return meta;

  TlsMeta tls;
  tls.role = hs_type == 1 ? TlsMeta::Role::CLIENT : TlsMeta::Role::SERVER;
  tls.handshake_bytes = hs_len + 4;
  Reader r{body.subspan(4, std::min<std::size_t>(hs_len, body.size() - 4))};
  r.u16();      // legacy version
  r.take(32);   // random
  r.take(r.u8());  // session id
  if (hs_type == 1) {
    const std::uint16_t cs_len = r.u16();
    tls.cipher_suite_bytes = cs_len;
    Bytes suites = r.take(cs_len);
    for (std::size_t i = 0; r.ok && i + 1 < suites.size(); i += 2) {
      tls.cipher_suites.push_back(hex16(be16(suites.data() + i)));
    }
    r.take(r.u8());  // compression methods
  } else {
    tls.cipher_suite_bytes = 2;
    tls.cipher_suites.push_back(hex16(r.u16()));
    r.u8();
  }
  std::optional<std::string> sni;
  if (r.ok && r.off + 2 <= r.b.size()) {
    const std::uint16_t ext_len = r.u16();
    tls.extension_bytes = ext_len;
    Bytes ext = r.take(std::min<std::size_t>(ext_len, r.b.size() - r.off));
    parse_extensions(ext, tls, sni);
  }
  if (hs_type == 1) meta.server_name = sni;
  meta.tls_fields = std::move(tls);
  return meta;
}

DissectResult dissect_frame(Bytes data, std::uint32_t link_type,
                            std::uint32_t original_length) {
  DissectResult res;
  std::size_t off = 0;
  std::uint16_t ethertype = 0;

  switch (link_type) {
    case linktype::kEthernet: {
      if (data.size() < 14) return res;
      ethertype = be16(data.data() + 12);
      off = 14;
      while ((ethertype == 0x8100 || ethertype == 0x88a8 || ethertype == 0x9100) &&
             data.size() >= off + 4) {
        ethertype = be16(data.data() + off + 2);
        off += 4;
      }
      break;
    }
    case linktype::kLinuxSll: {
      if (data.size() < 16) return res;
      ethertype = be16(data.data() + 14);
      off = 16;
      break;
    }
    case linktype::kRaw:
    case linktype::kIpv4:
    case linktype::kIpv6: {
      if (data.empty()) return res;
      const int v = data[0] >> 4;
      ethertype = v == 4 ? 0x0800 : v == 6 ? 0x86dd : 0;
      if (ethertype == 0) return res;
      break;
    }
    default:
      return res;
  }

  if (ethertype != 0x0800 && ethertype != 0x86dd) {
    res.status = DissectStatus::kNonIp;
    return res;
  }

  RawPacket pkt;
  pkt.length = original_length > 0 ? original_length : static_cast<std::uint32_t>(data.size());
  std::uint8_t proto = 0;
  std::size_t l4 = 0;
  std::size_t l4_end = 0;  // end of the transport segment per the IP header
  bool fragment_tail = false;

  Bytes ip = data.subspan(off);
  if (ethertype == 0x0800) {
    if (ip.size() < 20 || (ip[0] >> 4) != 4) return res;
    const std::size_t ihl = (ip[0] & 0x0fu) * 4u;
    if (ihl < 20 || ip.size() < ihl) return res;
    const std::uint16_t total = be16(ip.data() + 2);
    const std::uint16_t frag = be16(ip.data() + 6);
    fragment_tail = (frag & 0x1fff) != 0;
    pkt.ttl = ip[8];
    proto = ip[9];
    pkt.src_addr = IpAddress::v4(std::span<const std::uint8_t, 4>(ip.data() + 12, 4));
    pkt.dst_addr = IpAddress::v4(std::span<const std::uint8_t, 4>(ip.data() + 16, 4));
    l4 = ihl;
    l4_end = total >= ihl ? total : ihl;
  } else {
    if (ip.size() < 40 || (ip[0] >> 4) != 6) return res;
    const std::uint16_t plen = be16(ip.data() + 4);
    proto = ip[6];
    pkt.ttl = ip[7];
    pkt.src_addr = IpAddress::v6(std::span<const std::uint8_t, 16>(ip.data() + 8, 16));
    pkt.dst_addr = IpAddress::v6(std::span<const std::uint8_t, 16>(ip.data() + 24, 16));
    l4 = 40;
    l4_end = 40u + plen;
    for (int guard = 0; guard < 8; ++guard) {
      if (proto == 0 || proto == 43 || proto == 60) {
        if (ip.size() < l4 + 8) break;
        proto = ip[l4];
        l4 += (ip[l4 + 1] + 1u) * 8u;
      } else if (proto == 44) {
        if (ip.size() < l4 + 8) break;
        fragment_tail = (be16(ip.data() + l4 + 2) & 0xfff8) != 0;
        proto = ip[l4];
        l4 += 8;
      } else if (proto == 51) {
        if (ip.size() < l4 + 8) break;
        proto = ip[l4];
        l4 += (ip[l4 + 1] + 2u) * 4u;
      } else {
        break;
      }
    }
  }

  switch (proto) {
    case 6: pkt.ip_proto = IpProto::TCP; break;
    case 17: pkt.ip_proto = IpProto::UDP; break;
    case 1:
    case 58: pkt.ip_proto = IpProto::ICMP; break;
    default: pkt.ip_proto = IpProto::OTHER; break;
  }

  auto degrade = [&]() {
    if (pkt.ip_proto == IpProto::TCP) pkt.tcp_flags = 0;
    res.status = DissectStatus::kDegraded;
    res.packet = std::move(pkt);
    return res;
  };

  if (fragment_tail) return degrade();

  Bytes seg = l4 <= ip.size() ? ip.subspan(l4) : Bytes{};
  const std::size_t seg_len = l4_end > l4 ? l4_end - l4 : 0;

  Bytes app;
  switch (pkt.ip_proto) {
    case IpProto::TCP: {
      if (seg.size() < 20) return degrade();
      const std::size_t doff = (seg[12] >> 4) * 4u;
      if (doff < 20 || seg.size() < doff) return degrade();
      pkt.src_port = be16(seg.data());
      pkt.dst_port = be16(seg.data() + 2);
      pkt.tcp_flags = seg[13] & 0x3f;
      pkt.payload_length = seg_len > doff ? static_cast<std::uint32_t>(seg_len - doff) : 0;
      app = seg.subspan(doff, std::min<std::size_t>(seg.size() - doff, pkt.payload_length));
      break;
    }
    case IpProto::UDP: {
      if (seg.size() < 8) return degrade();
      pkt.src_port = be16(seg.data());
      pkt.dst_port = be16(seg.data() + 2);
      pkt.payload_length = seg_len > 8 ? static_cast<std::uint32_t>(seg_len - 8) : 0;
      app = seg.subspan(8, std::min<std::size_t>(seg.size() - 8, pkt.payload_length));
      break;
    }
    case IpProto::ICMP: {
      if (seg.size() < 4) return degrade();
      pkt.icmp_type = seg[0];
      pkt.icmp_code = seg[1];
      pkt.payload_length = seg_len > 8 ? static_cast<std::uint32_t>(seg_len - 8) : 0;
      break;
    }
    case IpProto::OTHER:
      break;
  }

  if (!app.empty()) {
    if (pkt.ip_proto == IpProto::UDP && (pkt.src_port == 53 || pkt.dst_port == 53)) {
      pkt.app_meta = parse_dns(app);
    } else if (pkt.ip_proto == IpProto::TCP) {
      pkt.app_meta = parse_http(app);
      if (!pkt.app_meta) pkt.app_meta = parse_tls(app);
      qualify_bare_target(pkt.app_meta, pkt);
    }
  }

  res.status = DissectStatus::kDecoded;
  res.packet = std::move(pkt);
  return res;
}

}  // namespace ctxflow
