#pragma once

#include <nlohmann/json.hpp>

#include "ctxflow/pairflow.hpp"

namespace ctxflow {

// Field names follow the PairFlow field numbering ("f1_flow_id",
// "f13_fqdn", ...). See docs/pairflow_format.md.
nlohmann::json to_json(const PairFlow& flow);
nlohmann::json to_json(const Planes& planes);
nlohmann::json to_json(const InitialStats& stats);
nlohmann::json to_json(const TlsMeta& tls);
nlohmann::json to_json(const UrlRecord& url);
nlohmann::json to_json(const FqdnRecord& fqdn);

// Missing sections default to empty, so projected variant lines (e.g. the
// HTTP variant) parse into a PairFlow with those parts left blank.
PairFlow pairflow_from_json(const nlohmann::json& j);
Planes planes_from_json(const nlohmann::json& j);
InitialStats stats_from_json(const nlohmann::json& j);

}  // namespace ctxflow
