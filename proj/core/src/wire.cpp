#include "ctxflow/wire.hpp"

#include <algorithm>
#include <string>

namespace ctxflow::wire {
namespace {

using Buf = std::vector<std::uint8_t>;

void put8(Buf& b, std::uint8_t v) { b.push_back(v); }
void put16(Buf& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}
void put24(Buf& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}
void put32(Buf& b, std::uint32_t v) {
  put16(b, static_cast<std::uint16_t>(v >> 16));
  put16(b, static_cast<std::uint16_t>(v));
}
void put_bytes(Buf& b, std::span<const std::uint8_t> s) {
  b.insert(b.end(), s.begin(), s.end());
}
void put_text(Buf& b, std::string_view s) { b.insert(b.end(), s.begin(), s.end()); }

void patch16(Buf& b, std::size_t at, std::uint16_t v) {
  b[at] = static_cast<std::uint8_t>(v >> 8);
  b[at + 1] = static_cast<std::uint8_t>(v);
}

std::size_t l4_header_len(IpProto proto) {
  switch (proto) {
    case IpProto::TCP: return 20;
    case IpProto::UDP: return 8;
    case IpProto::ICMP: return 8;
    case IpProto::OTHER: return 0;
  }
  return 0;
}

std::uint8_t proto_number(IpProto proto, bool v6) {
  switch (proto) {
    case IpProto::TCP: return 6;
    case IpProto::UDP: return 17;
    case IpProto::ICMP: return v6 ? 58 : 1;
    case IpProto::OTHER: return 253;  // reserved for experimentation
  }
  return 253;
}

void put_name(Buf& b, std::string_view name) {
  std::size_t start = 0;
  while (start < name.size()) {
    std::size_t dot = name.find('.', start);
    if (dot == std::string_view::npos) dot = name.size();
    const std::size_t len = std::min<std::size_t>(dot - start, 63);
    put8(b, static_cast<std::uint8_t>(len));
    put_text(b, name.substr(start, len));
    start = dot + 1;
  }
  put8(b, 0);
}

// Appends one extension; `body` fills its data.
template <typename F>
void put_extension(Buf& b, std::uint16_t type, F&& body) {
  put16(b, type);
  const std::size_t len_at = b.size();
  put16(b, 0);
  body(b);
  patch16(b, len_at, static_cast<std::uint16_t>(b.size() - len_at - 2));
}

void put_alpn(Buf& b, const std::vector<std::string>& alpn) {
  put_extension(b, 16, [&](Buf& e) {
    const std::size_t at = e.size();
    put16(e, 0);
    for (const auto& p : alpn) {
      put8(e, static_cast<std::uint8_t>(p.size()));
      put_text(e, p);
    }
    patch16(e, at, static_cast<std::uint16_t>(e.size() - at - 2));
  });
}

Buf handshake_record(std::uint16_t record_version, std::uint8_t hs_type,
                     const Buf& body) {
  Buf b;
  put8(b, 22);
  put16(b, record_version);
  put16(b, static_cast<std::uint16_t>(body.size() + 4));
  put8(b, hs_type);
  put24(b, static_cast<std::uint32_t>(body.size()));
  put_bytes(b, body);
  return b;
}

}  // namespace

std::vector<std::uint8_t> raw_ip_packet(const FrameSpec& spec) {
  const bool v6 = spec.src.is_v6();
  const std::size_t l4 = l4_header_len(spec.proto);
  const std::size_t seg = l4 + spec.payload.size() + spec.virtual_payload;
  Buf b;
  b.reserve(40 + l4 + spec.payload.size());
  if (!v6) {
    put8(b, 0x45);
    put8(b, 0);
    put16(b, static_cast<std::uint16_t>(std::min<std::size_t>(20 + seg, 0xffff)));
    put16(b, 0);
    put16(b, 0x4000);
    put8(b, spec.ttl);
    put8(b, proto_number(spec.proto, false));
    put16(b, 0);
    put_bytes(b, spec.src.bytes());
    put_bytes(b, spec.dst.bytes());
  } else {
    put32(b, 0x60000000u);
    put16(b, static_cast<std::uint16_t>(std::min<std::size_t>(seg, 0xffff)));
    put8(b, proto_number(spec.proto, true));
    put8(b, spec.ttl);
    put_bytes(b, spec.src.bytes());
    put_bytes(b, spec.dst.bytes());
  }
  switch (spec.proto) {
    case IpProto::TCP:
      put16(b, spec.src_port);
      put16(b, spec.dst_port);
      put32(b, spec.seq);
      put32(b, spec.ack);
      put8(b, 5 << 4);
      put8(b, spec.tcp_flags);
      put16(b, 65535);
      put16(b, 0);
      put16(b, 0);
      break;
    case IpProto::UDP:
      put16(b, spec.src_port);
      put16(b, spec.dst_port);
      put16(b, static_cast<std::uint16_t>(std::min<std::size_t>(seg, 0xffff)));
      put16(b, 0);
      break;
    case IpProto::ICMP:
      put8(b, spec.icmp_type);
      put8(b, spec.icmp_code);
      put16(b, 0);
      put32(b, 0);
      break;
    case IpProto::OTHER:
      break;
  }
  put_bytes(b, spec.payload);
  return b;
}

std::vector<std::uint8_t> ethernet_frame(const FrameSpec& spec) {
  Buf b = {0x02, 0x00, 0x00, 0x00, 0x00, 0x02, 0x02, 0x00, 0x00, 0x00, 0x00, 0x01};
  put16(b, spec.src.is_v6() ? 0x86dd : 0x0800);
  const Buf ip = raw_ip_packet(spec);
  put_bytes(b, ip);
  return b;
}

std::uint32_t ethernet_frame_length(bool v6, IpProto proto,
                                    std::size_t payload_len) {
  return static_cast<std::uint32_t>(14 + (v6 ? 40 : 20) + l4_header_len(proto) +
                                    payload_len);
}

std::uint32_t wire_length(const FrameSpec& spec) {
  return ethernet_frame_length(spec.src.is_v6(), spec.proto,
                               spec.payload.size() + spec.virtual_payload);
}

std::vector<std::uint8_t> arp_frame() {
  Buf b = {0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0x02, 0x00, 0x00, 0x00, 0x00, 0x01};
  put16(b, 0x0806);
  put16(b, 1);       // Ethernet
  put16(b, 0x0800);  // IPv4
  put8(b, 6);
  put8(b, 4);
  put16(b, 1);  // request
  put_bytes(b, std::vector<std::uint8_t>{0x02, 0, 0, 0, 0, 1, 10, 0, 0, 1});
  put_bytes(b, std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 10, 0, 0, 254});
  return b;
}

std::vector<std::uint8_t> http_request(std::string_view method,
                                       std::string_view host,
                                       std::string_view target,
                                       std::string_view user_agent,
                                       std::string_view content_type,
                                       std::size_t body_len) {
  std::string s;
  s.append(method).append(" ").append(target).append(" HTTP/1.1\r\n");
  s.append("Host: ").append(host).append("\r\n");
  if (!user_agent.empty()) s.append("User-Agent: ").append(user_agent).append("\r\n");
  s.append("Accept: */*\r\n");
  if (!content_type.empty()) {
    s.append("Content-Type: ").append(content_type).append("\r\n");
  }
  if (body_len > 0) {
    s.append("Content-Length: ").append(std::to_string(body_len)).append("\r\n");
  }
  s.append("\r\n");
  return Buf(s.begin(), s.end());
}

std::vector<std::uint8_t> http_response(int status, std::string_view server,
                                        std::string_view content_type,
                                        std::size_t body_len) {
  std::string reason;
  switch (status / 100) {
    case 2: reason = "OK"; break;
    case 3: reason = "Found"; break;
    case 4: reason = status == 404 ? "Not Found" : "Bad Request"; break;
    default: reason = "Internal Server Error"; break;
  }
  std::string s = "HTTP/1.1 " + std::to_string(status) + " " + reason + "\r\n";
  if (!server.empty()) s.append("Server: ").append(server).append("\r\n");
  if (!content_type.empty()) {
    s.append("Content-Type: ").append(content_type).append("\r\n");
  }
  s.append("Content-Length: ").append(std::to_string(body_len)).append("\r\n\r\n");
  return Buf(s.begin(), s.end());
}

std::vector<std::uint8_t> dns_query(std::uint16_t id, std::string_view qname) {
  Buf b;
  put16(b, id);
  put16(b, 0x0100);
  put16(b, 1);
  put16(b, 0);
  put16(b, 0);
  put16(b, 0);
  put_name(b, qname);
  put16(b, 1);
  put16(b, 1);
  return b;
}

std::vector<std::uint8_t> dns_response(std::uint16_t id, std::string_view qname,
                                       const std::vector<IpAddress>& answers,
                                       const std::vector<std::string>& ns) {
  Buf b;
  put16(b, id);
  put16(b, 0x8180);
  put16(b, 1);
  put16(b, static_cast<std::uint16_t>(answers.size()));
  put16(b, static_cast<std::uint16_t>(ns.size()));
  put16(b, 0);
  put_name(b, qname);
  put16(b, 1);
  put16(b, 1);
  for (const auto& a : answers) {
    put16(b, 0xc00c);  // pointer to the question name
    put16(b, a.is_v6() ? 28 : 1);
    put16(b, 1);
    put32(b, 300);
    put16(b, static_cast<std::uint16_t>(a.bytes().size()));
    put_bytes(b, a.bytes());
  }
  for (const auto& n : ns) {
    put16(b, 0xc00c);
    put16(b, 2);
    put16(b, 1);
    put32(b, 3600);
    const std::size_t len_at = b.size();
    put16(b, 0);
    put_name(b, n);
    patch16(b, len_at, static_cast<std::uint16_t>(b.size() - len_at - 2));
  }
  return b;
}

std::vector<std::uint8_t> tls_client_hello(const HelloSpec& spec) {
  Buf body;
  put16(body, 0x0303);
  for (int i = 0; i < 32; ++i) put8(body, static_cast<std::uint8_t>(i * 7 + 1));
  put8(body, 0);  // session id
  const std::size_t n = std::min<std::size_t>(spec.n_cipher_suites, 8);
  put16(body, static_cast<std::uint16_t>(n * 2));
  for (std::size_t i = 0; i < n; ++i) put16(body, spec.cipher_suites_or_chosen[i]);
  put8(body, 1);
  put8(body, 0);

  Buf ext;
  if (!spec.sni.empty()) {
    put_extension(ext, 0, [&](Buf& e) {
      put16(e, static_cast<std::uint16_t>(spec.sni.size() + 3));
      put8(e, 0);
      put16(e, static_cast<std::uint16_t>(spec.sni.size()));
      put_text(e, spec.sni);
    });
  }
  if (spec.include_groups) {
    put_extension(ext, 10, [](Buf& e) {
      put16(e, 4);
      put16(e, 0x001d);
      put16(e, 0x0017);
    });
  }
  if (spec.include_ec_point_formats) {
    put_extension(ext, 11, [](Buf& e) {
      put8(e, 1);
      put8(e, 0);
    });
  }
  if (spec.include_sigalgs) {
    put_extension(ext, 13, [](Buf& e) {
      put16(e, 6);
      put16(e, 0x0403);
      put16(e, 0x0804);
      put16(e, 0x0401);
    });
  }
  if (!spec.alpn.empty()) put_alpn(ext, spec.alpn);
  put16(body, static_cast<std::uint16_t>(ext.size()));
  put_bytes(body, ext);
  return handshake_record(spec.record_version, 1, body);
}

std::vector<std::uint8_t> tls_server_hello(const HelloSpec& spec) {
  Buf body;
  put16(body, 0x0303);
  for (int i = 0; i < 32; ++i) put8(body, static_cast<std::uint8_t>(i * 11 + 3));
  put8(body, 0);
  put16(body, spec.cipher_suites_or_chosen[0]);
  put8(body, 0);
  Buf ext;
  if (spec.include_ec_point_formats) {
    put_extension(ext, 11, [](Buf& e) {
      put8(e, 1);
      put8(e, 0);
    });
  }
  if (!spec.alpn.empty()) put_alpn(ext, {spec.alpn.front()});
  put16(body, static_cast<std::uint16_t>(ext.size()));
  put_bytes(body, ext);
  return handshake_record(spec.record_version, 2, body);
}

std::vector<std::uint8_t> tls_app_data(std::uint16_t record_version,
                                       std::size_t body_len) {
  Buf b;
  put8(b, 23);
  put16(b, record_version);
  put16(b, static_cast<std::uint16_t>(std::min<std::size_t>(body_len, 16384)));
  return b;
}

}  // namespace ctxflow::wire
