#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "ctxflow/packet.hpp"
#include "ctxflow/pcap_io.hpp"

namespace ctxflow {

enum class DissectStatus : std::uint8_t {
  kDecoded,
  kDegraded,  // IP header fine, transport or application layer malformed
  kNonIp,
  kFailed,    // link or IP header unusable
};

struct DissectResult {
  DissectStatus status = DissectStatus::kFailed;
  std::optional<RawPacket> packet;
};

// Decodes one frame into a RawPacket. Application metadata is recognised by
// content (HTTP request/status lines, TLS record headers) except DNS, which
// is recognised on UDP port 53.
DissectResult dissect_frame(std::span<const std::uint8_t> data,
                            std::uint32_t link_type,
                            std::uint32_t original_length);

// Application-layer sniffers, exposed for tests.
std::optional<ApplicationMeta> parse_http(std::span<const std::uint8_t> payload);
std::optional<ApplicationMeta> parse_dns(std::span<const std::uint8_t> payload);
std::optional<ApplicationMeta> parse_tls(std::span<const std::uint8_t> payload);

}  // namespace ctxflow
