#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "ctxflow/pairflow.hpp"

namespace ctxflow {

enum class RemovalReason : std::uint8_t { FailedTcp, NoData };
std::string_view to_string(RemovalReason r);

struct HygieneReport {
  std::size_t failed_tcp = 0;
  std::size_t no_data = 0;
  std::vector<FlowId> removed;
};

struct HygieneResult {
  std::vector<PairFlow> kept;
  HygieneReport report;
};

// FailedTcp: a SYN was seen but no handshake completed and nothing was
// exchanged. NoData: the TCP data sub-plane is empty.
std::optional<RemovalReason> hygiene_verdict(const PairFlow& flow);

HygieneResult hygiene_filter(std::vector<PairFlow> flows);

}  // namespace ctxflow
