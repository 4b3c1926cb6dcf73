#include "ctxflow/packet.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace ctxflow {

std::string_view to_string(IpProto p) {
  switch (p) {
    case IpProto::TCP: return "TCP";
    case IpProto::UDP: return "UDP";
    case IpProto::ICMP: return "ICMP";
    case IpProto::OTHER: return "OTHER";
  }
  return "OTHER";
}

std::string_view to_string(AppKind k) {
  switch (k) {
    case AppKind::NONE: return "NONE";
    case AppKind::HTTP_REQUEST: return "HTTP_REQUEST";
    case AppKind::HTTP_RESPONSE: return "HTTP_RESPONSE";
    case AppKind::DNS_REQUEST: return "DNS_REQUEST";
    case AppKind::DNS_RESPONSE: return "DNS_RESPONSE";
    case AppKind::TLS_HANDSHAKE: return "TLS_HANDSHAKE";
    case AppKind::TLS_APPDATA: return "TLS_APPDATA";
  }
  return "NONE";
}

std::string_view to_string(ClassLabel c) {
  switch (c) {
    case ClassLabel::APT: return "APT";
    case ClassLabel::BOTNET: return "BOTNET";
    case ClassLabel::LEGITIMATE: return "LEGITIMATE";
    case ClassLabel::UNLABELED: return "UNLABELED";
  }
  return "UNLABELED";
}

std::optional<ClassLabel> parse_class_label(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  if (upper == "APT") return ClassLabel::APT;
  if (upper == "BOTNET") return ClassLabel::BOTNET;
  if (upper == "LEGITIMATE" || upper == "LEGIT") return ClassLabel::LEGITIMATE;
  if (upper == "UNLABELED") return ClassLabel::UNLABELED;
  return std::nullopt;
}

}  // namespace ctxflow
