#include "ctxflow/hygiene.hpp"

#include <algorithm>

namespace ctxflow {
namespace {

bool has_flags(const PlanePoint& p, std::uint8_t set, std::uint8_t clear) {
  auto f = parse_flag_tag(p.tag);
  return f && (*f & set) == set && (*f & clear) == 0;
}

// A SYN-ACK later acknowledged (ACK without SYN) by the other side.
bool handshake_completed(const Planes& planes) {
  std::vector<const PlanePoint*> tcp;
  for (const auto& p : planes.tcp_control) tcp.push_back(&p);
  for (const auto& p : planes.tcp_data) tcp.push_back(&p);
  std::sort(tcp.begin(), tcp.end(), [](const PlanePoint* a, const PlanePoint* b) {
    return a->packet_index < b->packet_index;
  });
  std::optional<bool> synack_dir;
  for (const PlanePoint* p : tcp) {
    if (!synack_dir) {
      if (has_flags(*p, tcp_flag::kSyn | tcp_flag::kAck, 0)) synack_dir = p->outbound;
      continue;
    }
    const bool data = !parse_flag_tag(p->tag).has_value();
    if (p->outbound != *synack_dir &&
        (data || has_flags(*p, tcp_flag::kAck, tcp_flag::kSyn))) {
      return true;
    }
  }
  return false;
}

}  // namespace

std::string_view to_string(RemovalReason r) {
  return r == RemovalReason::FailedTcp ? "FailedTCP" : "NoData";
}

std::optional<RemovalReason> hygiene_verdict(const PairFlow& flow) {
  const Planes& pl = flow.planes;
  if (!pl.tcp_data.empty()) return std::nullopt;
  const bool saw_syn = std::any_of(pl.tcp_control.begin(), pl.tcp_control.end(),
                                   [](const PlanePoint& p) {
                                     return has_flags(p, tcp_flag::kSyn, 0);
                                   });
  if (saw_syn && !handshake_completed(pl)) return RemovalReason::FailedTcp;
  return RemovalReason::NoData;
}

HygieneResult hygiene_filter(std::vector<PairFlow> flows) {
  HygieneResult res;
  res.kept.reserve(flows.size());
  for (auto& f : flows) {
    const auto verdict = hygiene_verdict(f);
    if (!verdict) {
      res.kept.push_back(std::move(f));
      continue;
    }
    if (*verdict == RemovalReason::FailedTcp) {
      ++res.report.failed_tcp;
    } else {
      ++res.report.no_data;
    }
    res.report.removed.push_back(f.flow_id);
  }
  return res;
}

}  // namespace ctxflow
