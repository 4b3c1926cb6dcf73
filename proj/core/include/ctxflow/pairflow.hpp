#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxflow/ingest.hpp"
#include "ctxflow/ip_address.hpp"
#include "ctxflow/packet.hpp"
#include "ctxflow/url.hpp"

namespace ctxflow {

// (capture, local host, remote server). The capture name keeps identical
// internal addresses from different captures apart.
struct PairKey {
  std::string capture_name;
  IpAddress source;
  IpAddress destination;

  PairKey reversed() const { return {capture_name, destination, source}; }
  std::string to_string() const;

  friend auto operator<=>(const PairKey&, const PairKey&) = default;
  friend bool operator==(const PairKey&, const PairKey&) = default;
};

struct PairKeyHash {
  std::size_t operator()(const PairKey& k) const noexcept;
};

struct FlowId {
  std::int64_t cs_id = 0;
  std::int64_t pf_id = 0;

  friend auto operator<=>(const FlowId&, const FlowId&) = default;
  friend bool operator==(const FlowId&, const FlowId&) = default;
};

enum class Protocol : std::uint8_t { TCP, UDP, DNS, ICMP, HTTP, TLS, SSL };
inline constexpr std::size_t kProtocolCount = 7;
std::string_view to_string(Protocol p);
std::optional<Protocol> parse_protocol(std::string_view name);

// EPFLAG: protocol presence bits of a flow.
class ProtocolSet {
 public:
  ProtocolSet() = default;
  static ProtocolSet from_bits(std::uint8_t bits) {
    ProtocolSet s;
    s.bits_ = bits;
    return s;
  }

  void insert(Protocol p) { bits_ |= bit(p); }
  bool contains(Protocol p) const { return (bits_ & bit(p)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::uint8_t bits() const { return bits_; }
  ProtocolSet operator|(ProtocolSet o) const { return from_bits(bits_ | o.bits_); }
  std::vector<Protocol> members() const;
  // Alphabetically sorted names joined by '|', e.g. "DNS|HTTP|TCP|UDP".
  std::string render() const;
  static ProtocolSet parse(std::string_view rendered);

  friend bool operator==(ProtocolSet, ProtocolSet) = default;

 private:
  static std::uint8_t bit(Protocol p) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(p));
  }
  std::uint8_t bits_ = 0;
};

struct PlanePoint {
  std::uint64_t packet_index = 0;
  std::string tag;                   // protocol name or TCP flag hex
  std::vector<std::string> details;  // request/response, method/status, type
  double timestamp = 0.0;
  std::uint32_t length = 0;
  bool outbound = true;  // sent by the pair's source

  bool operator==(const PlanePoint&) const = default;
};

// Tuple rendering, e.g. (460854, 'HTTP', 'Request', 'GET', 'Empty Content',
// 1066.51, 383). Purely numeric details are printed unquoted.
std::string render(const PlanePoint& p);

struct Planes {
  std::vector<PlanePoint> tcp_control;
  std::vector<PlanePoint> tcp_data;
  std::vector<PlanePoint> udp;
  std::vector<PlanePoint> icmp;

  bool operator==(const Planes&) const = default;
};

struct FqdnRecord {
  std::string fqdn;
  std::vector<std::string> a_records;
  std::vector<std::string> ns_records;
  std::optional<double> domain_age_days;

  bool operator==(const FqdnRecord&) const = default;
};

inline TlsMeta empty_tls_meta(TlsMeta::Role role) {
  TlsMeta m;
  m.role = role;
  return m;
}

struct TlsSettings {
  TlsMeta client = empty_tls_meta(TlsMeta::Role::CLIENT);
  TlsMeta server = empty_tls_meta(TlsMeta::Role::SERVER);

  bool operator==(const TlsSettings&) const = default;
};

struct InitialStats {
  double total_bytes = 0, total_sent = 0, total_received = 0;
  double total_encrypted = 0, encrypted_sent = 0, encrypted_received = 0;
  std::int64_t n_packets = 0;
  std::int64_t n_tcp_total = 0;
  std::int64_t n_raw_tcp = 0, n_raw_udp = 0, n_icmp = 0, n_dns = 0,
               n_http = 0, n_tls = 0, n_ssl = 0;
  double duration = 0;
  double ttl_max = 0, ttl_min = 0, ttl_mean = 0, ttl_sd = 0;
  double delta_max = 0, delta_min = 0, delta_mean = 0, delta_sd = 0;
  double content_length_total = 0, content_length_max = 0,
         content_length_min = 0, content_length_median = 0;
  double client_cs_bytes_max = 0, client_cs_bytes_min = 0,
         client_cs_bytes_median = 0;
  double server_cs_bytes_max = 0, server_cs_bytes_min = 0,
         server_cs_bytes_median = 0;
  double client_ext_bytes_max = 0, client_ext_bytes_min = 0,
         client_ext_bytes_median = 0;
  double server_ext_bytes_max = 0, server_ext_bytes_min = 0,
         server_ext_bytes_median = 0;

  bool operator==(const InitialStats&) const = default;
};

struct TimeWindow {
  double start = 0;
  double end = 0;
  bool operator==(const TimeWindow&) const = default;
};

struct PairFlow {
  FlowId flow_id;
  PairKey pair;
  TimeWindow time_window;
  ProtocolSet epflag;
  Planes planes;
  std::vector<FqdnRecord> fqdns;
  std::vector<UrlRecord> urls;
  std::vector<std::string> http_servers;   // distinct, first-seen order
  std::vector<std::string> status_codes;   // distinct
  std::vector<std::string> content_types;  // distinct
  std::vector<std::string> user_agents;    // every request's UA, in order
  TlsSettings tls;
  InitialStats stats;

  bool ip_only() const { return fqdns.empty(); }
  bool operator==(const PairFlow&) const = default;
};

// Maps FQDN (lower case) to domain age in days; loaded from a sidecar file.
using DomainAges = std::unordered_map<std::string, double>;
// Lines "fqdn age_days" or "fqdn,age_days"; '#' starts a comment.
DomainAges load_domain_ages(const std::filesystem::path& path);

// Pair-to-FlowId table. assign() is an atomic read-increment per key.
class PairDirectory {
 public:
  struct Entry {
    std::int64_t cs_id = 0;
    std::int64_t last_pf_id = -1;
  };

  PairDirectory() = default;
  PairDirectory(const PairDirectory& other);
  PairDirectory& operator=(const PairDirectory& other);

  FlowId assign(const PairKey& pair);
  std::optional<Entry> find(const PairKey& pair) const;
  bool contains(const PairKey& pair) const { return find(pair).has_value(); }
  std::int64_t next_cs_id() const;
  std::size_t size() const;
  std::map<PairKey, Entry> entries() const;

  // Restores state from persistence.
  void restore(const PairKey& pair, Entry e);
  void set_next_cs_id(std::int64_t next);

 private:
  mutable std::mutex mu_;
  std::map<PairKey, Entry> entries_;
  std::int64_t next_cs_id_ = 0;
};

// Tracking output for one window.
struct TrackedWindow {
  std::string capture_name;
  TimeWindow window;
  std::map<PairKey, std::vector<RawPacket>> pairs;
  std::vector<RawPacket> dns_pool;  // withheld DNS traffic
};

// Returns true when the given orientation of a pair is already known, so a
// later window keeps the orientation chosen earlier.
using OrientationHint = std::function<bool(const PairKey&)>;

TrackedWindow track_pairs(const WindowBatch& batch,
                          const OrientationHint& known = {});

// Attaches DNS responses from the pool that were sent to the pair's source
// and answer with the pair's destination, plus that host's requests for the
// same query names. Attached packets are merged in arrival order.
void attach_dns(std::map<PairKey, std::vector<RawPacket>>& pairs,
                std::span<const RawPacket> dns_pool);

FlowId assign_flow_id(const PairKey& pair, PairDirectory& directory);

Planes separate_planes(std::span<const RawPacket> packets, const PairKey& pair);

// Builds the full flow record. Throws EmptyFlow when `packets` is empty.
PairFlow encapsulate(const FlowId& flow_id, const PairKey& pair,
                     std::span<const RawPacket> packets,
                     const TimeWindow& window,
                     const DomainAges* ages = nullptr);

// Count of FIN-ACK (0x11) control points, the resumed-connection measure.
int count_fin_ack(const Planes& planes);
// Number of DNS requests in the UDP plane.
int count_dns_requests(const Planes& planes);

// Parses a control-plane tag such as "0x12".
std::optional<std::uint8_t> parse_flag_tag(std::string_view tag);

}  // namespace ctxflow
