#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctxflow/ip_address.hpp"

namespace ctxflow {

enum class IpProto : std::uint8_t { TCP, UDP, ICMP, OTHER };

enum class AppKind : std::uint8_t {
  NONE,
  HTTP_REQUEST,
  HTTP_RESPONSE,
  DNS_REQUEST,
  DNS_RESPONSE,
  TLS_HANDSHAKE,
  TLS_APPDATA,
};

enum class ClassLabel : std::uint8_t { APT, BOTNET, LEGITIMATE, UNLABELED };

std::string_view to_string(IpProto p);
std::string_view to_string(AppKind k);
std::string_view to_string(ClassLabel c);
// Accepts upper or lower case names ("apt", "BOTNET", ...).
std::optional<ClassLabel> parse_class_label(std::string_view text);

namespace tcp_flag {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
inline constexpr std::uint8_t kUrg = 0x20;
}  // namespace tcp_flag

struct TlsMeta {
  enum class Role : std::uint8_t { CLIENT, SERVER };

  Role role = Role::CLIENT;
  std::vector<std::string> cipher_suites;
  std::vector<std::string> extension_types;
  std::vector<std::string> signature_algorithms;
  std::vector<std::string> supported_groups;
  std::vector<std::string> alpn_protocols;
  std::vector<std::string> ec_point_formats;
  std::uint32_t handshake_bytes = 0;
  // Byte sizes of the cipher-suite vector and the extensions block as they
  // appear on the wire.
  std::uint32_t cipher_suite_bytes = 0;
  std::uint32_t extension_bytes = 0;

  bool operator==(const TlsMeta&) const = default;
};

struct DnsAnswer {
  std::string record_type;  // "A", "AAAA", "NS", "CNAME", ...
  std::string value;

  bool operator==(const DnsAnswer&) const = default;
};

struct ApplicationMeta {
  AppKind kind = AppKind::NONE;
  std::optional<std::string> http_method;
  std::optional<int> http_status;
  std::optional<std::string> content_type;
  std::optional<std::uint64_t> content_length;
  // Host plus request target without scheme, e.g. "evil.com/a/b.exe?x=1".
  std::optional<std::string> url;
  std::optional<std::string> user_agent;
  // HTTP "Server" header for responses, SNI for TLS client hellos.
  std::optional<std::string> server_name;
  std::optional<std::string> dns_qname;
  std::vector<DnsAnswer> dns_answers;  // answer and authority sections
  std::optional<TlsMeta> tls_fields;
  // Record-layer version of the first TLS record (0x0300 = SSL 3.0).
  std::uint16_t tls_record_version = 0;

  bool operator==(const ApplicationMeta&) const = default;
};

struct RawPacket {
  std::uint64_t packet_index = 0;  // 1-based record number in the capture
  double timestamp = 0.0;          // seconds since the first capture record
  IpAddress src_addr;
  IpAddress dst_addr;
  std::optional<std::uint16_t> src_port;
  std::optional<std::uint16_t> dst_port;
  IpProto ip_proto = IpProto::OTHER;
  std::uint32_t length = 0;  // original frame length on the wire
  std::optional<std::uint8_t> tcp_flags;
  std::uint32_t payload_length = 0;  // transport payload bytes
  std::uint8_t ttl = 0;              // IPv4 TTL or IPv6 hop limit
  std::optional<std::uint8_t> icmp_type;
  std::optional<std::uint8_t> icmp_code;
  std::optional<ApplicationMeta> app_meta;

  bool is_dns() const {
    return app_meta && (app_meta->kind == AppKind::DNS_REQUEST ||
                        app_meta->kind == AppKind::DNS_RESPONSE);
  }
  bool is_http() const {
    return app_meta && (app_meta->kind == AppKind::HTTP_REQUEST ||
                        app_meta->kind == AppKind::HTTP_RESPONSE);
  }
  bool is_tls_record() const {
    return app_meta && (app_meta->kind == AppKind::TLS_HANDSHAKE ||
                        app_meta->kind == AppKind::TLS_APPDATA);
  }
  // SSL 3.0 and older record versions count as SSL rather than TLS.
  bool is_ssl() const {
    return is_tls_record() && app_meta->tls_record_version < 0x0301;
  }

  bool operator==(const RawPacket&) const = default;
};

struct CaptureLabel {
  std::string capture_name;
  ClassLabel class_label = ClassLabel::UNLABELED;
};

}  // namespace ctxflow
