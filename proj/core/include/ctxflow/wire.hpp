#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ctxflow/ip_address.hpp"
#include "ctxflow/packet.hpp"

// Frame and payload crafting used by the synthetic corpus generator and by
// tests that need real bytes to decode.
namespace ctxflow::wire {

struct FrameSpec {
  IpAddress src;
  IpAddress dst;
  IpProto proto = IpProto::TCP;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t tcp_flags = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t ttl = 64;
  std::uint8_t icmp_type = 8;
  std::uint8_t icmp_code = 0;
  std::vector<std::uint8_t> payload;
  // Payload bytes counted in the IP length and the frame's original length
  // but not captured (a header-only snapshot of a large transfer).
  std::uint32_t virtual_payload = 0;
};

// Original on-the-wire length of the Ethernet frame for `spec`.
std::uint32_t wire_length(const FrameSpec& spec);

// Ethernet II + IPv4/IPv6 + TCP/UDP/ICMP. Checksums are left zero.
std::vector<std::uint8_t> ethernet_frame(const FrameSpec& spec);
// Same layers without the Ethernet header (link type RAW).
std::vector<std::uint8_t> raw_ip_packet(const FrameSpec& spec);
// Ethernet ARP request, used to exercise the non-IP filter.
std::vector<std::uint8_t> arp_frame();

// Length of the Ethernet frame ethernet_frame() would produce.
std::uint32_t ethernet_frame_length(bool v6, IpProto proto,
                                    std::size_t payload_len);

std::vector<std::uint8_t> http_request(std::string_view method,
                                       std::string_view host,
                                       std::string_view target,
                                       std::string_view user_agent,
                                       std::string_view content_type,
                                       std::size_t body_len);
std::vector<std::uint8_t> http_response(int status, std::string_view server,
                                        std::string_view content_type,
                                        std::size_t body_len);

std::vector<std::uint8_t> dns_query(std::uint16_t id, std::string_view qname);
// A records for IPv4 answers, AAAA for IPv6; NS records go to the authority
// section.
std::vector<std::uint8_t> dns_response(std::uint16_t id, std::string_view qname,
                                       const std::vector<IpAddress>& answers,
                                       const std::vector<std::string>& ns);

struct HelloSpec {
  std::uint16_t record_version = 0x0301;
  std::uint16_t cipher_suites_or_chosen[8] = {0x1301, 0xc02f, 0xc030, 0x009c};
  std::size_t n_cipher_suites = 4;
  std::string sni;
  std::vector<std::string> alpn;
  bool include_groups = true;
  bool include_sigalgs = true;
  bool include_ec_point_formats = true;
};
std::vector<std::uint8_t> tls_client_hello(const HelloSpec& spec);
std::vector<std::uint8_t> tls_server_hello(const HelloSpec& spec);
std::vector<std::uint8_t> tls_app_data(std::uint16_t record_version,
                                       std::size_t body_len);

}  // namespace ctxflow::wire
