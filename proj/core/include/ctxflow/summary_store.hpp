#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxflow/features.hpp"
#include "ctxflow/pairflow.hpp"

namespace ctxflow {

// Flow slots (1-50) are folded with a weighted average; profile slots
// (51-102) are overwritten at each profile recompute.
inline constexpr int kLastFlowSlot = 50;

struct ContextualSummary {
  std::int64_t cs_id = 0;
  PairKey pair;
  TimeWindow window_span;
  // Number of absorbed PairFlows minus one; the weight of the running mean.
  std::int64_t last_pf_id = -1;
  std::int64_t last_flow_pf_id = -1;  // pf_id of the latest absorbed flow
  std::int64_t profile_interval = -1;
  FeatureVector features;
  ProtocolSet epflag_union;
  std::set<std::string> ua_store;
  std::optional<ClassLabel> label;

  bool operator==(const ContextualSummary&) const = default;
};

// (old * n_prev + incoming) / (n_prev + 1)
double update_numeric(double old, std::int64_t n_prev, double incoming);
ProtocolSet update_flags(ProtocolSet old, ProtocolSet incoming);
void update_ua_store(std::set<std::string>& store,
                     std::span<const std::string> incoming);

struct Blacklist {
  struct Provenance {
    std::int64_t cs_id = -1;
    double detected_at = 0;
    bool operator==(const Provenance&) const = default;
  };

  std::set<IpAddress> ips;
  std::set<std::string> fqdns;
  std::map<std::string, Provenance> provenance;  // "ip:..." / "fqdn:..."

  bool add_ip(const IpAddress& ip, Provenance p);
  bool add_fqdn(const std::string& fqdn, Provenance p);
  bool add_ip(const IpAddress& ip) { return add_ip(ip, Provenance{-1, 0}); }
  bool add_fqdn(const std::string& fqdn) { return add_fqdn(fqdn, Provenance{-1, 0}); }
  std::size_t size() const { return ips.size() + fqdns.size(); }

  // One indicator per line, "ip:" or "fqdn:" prefixed; '#' comments allowed.
  // Returns the number of new entries. Throws FormatError on a bad line.
  std::size_t import_text(std::istream& in);
  void export_text(std::ostream& out) const;

  bool operator==(const Blacklist&) const = default;
};

enum class Verdict : std::uint8_t { PASS, BLOCKED };
std::string_view to_string(Verdict v);

Verdict blacklist_check(const PairFlow& flow, const Blacklist& bl);

// Pair directory, ContextualSummaries and the blacklist. Mutations are
// recorded as log events; persist() appends them to the registry log and
// compact() folds the log into the snapshot.
class SummaryRegistry {
 public:
  SummaryRegistry() = default;

  PairDirectory& directory() { return directory_; }
  const PairDirectory& directory() const { return directory_; }
  Blacklist& blacklist() { return blacklist_; }
  const Blacklist& blacklist() const { return blacklist_; }

  FlowId assign_flow_id(const PairKey& pair);
  const ContextualSummary* find(const PairKey& pair) const;
  const ContextualSummary* find(std::int64_t cs_id) const;
  const std::map<std::int64_t, ContextualSummary>& summaries() const {
    return summaries_;
  }

  ContextualSummary& upsert(const FeatureVector& flow_features,
                            const PairFlow& flow,
                            std::span<const std::string> host_uas,
                            std::int64_t profile_interval);
  void set_label(std::int64_t cs_id, ClassLabel label);
  bool blacklist_ip(const IpAddress& ip, Blacklist::Provenance p);
  bool blacklist_fqdn(const std::string& fqdn, Blacklist::Provenance p);

  // Loads "<dir>/registry.json" (if any) and replays "<dir>/registry.log.jsonl".
  static SummaryRegistry open(const std::filesystem::path& dir);
  void persist(const std::filesystem::path& dir);
  void compact(const std::filesystem::path& dir);

  nlohmann::json snapshot_json() const;
  static SummaryRegistry from_snapshot(const nlohmann::json& j);
  std::size_t pending_events() const { return pending_.size(); }

  static constexpr const char* kSnapshotFile = "registry.json";
  static constexpr const char* kLogFile = "registry.log.jsonl";
  static constexpr int kSnapshotVersion = 1;

 private:
  void apply_event(const nlohmann::json& ev);

  PairDirectory directory_;
  std::map<std::int64_t, ContextualSummary> summaries_;
  Blacklist blacklist_;
  std::vector<nlohmann::json> pending_;
};

// Upsert entry point matching the registry contract.
ContextualSummary& upsert_summary(const FeatureVector& flow_features,
                                  const PairFlow& flow,
                                  SummaryRegistry& registry,
                                  std::span<const std::string> host_uas = {},
                                  std::int64_t profile_interval = 0);

nlohmann::json to_json(const ContextualSummary& s);
ContextualSummary summary_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FeatureVector& v);
FeatureVector feature_vector_from_json(const nlohmann::json& j);

}  // namespace ctxflow
