#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxflow/packet.hpp"

namespace ctxflow {

enum class Ttp : std::uint8_t {
  FALLBACK_CHANNEL,
  WEB_PROTOCOL,
  NON_APP_PROTOCOL,
  PROTOCOL_IMPERSONATION,
  IP_ONLY,
  ENCRYPTED_CHANNEL,
};
inline constexpr std::size_t kTtpCount = 6;
std::string_view to_string(Ttp t);
std::optional<Ttp> parse_ttp(std::string_view text);
const std::vector<Ttp>& all_ttps();

struct Range {
  double lo = 0;
  double hi = 0;
  bool operator==(const Range&) const = default;
};

// Per-class generation parameters. Times in seconds, sizes in bytes.
struct DistributionParams {
  Range servers;              // remote endpoints per capture
  Range sessions;             // TCP connections per flow window
  Range dns_per_flow;         // DNS requests per named flow window
  Range received_sent;        // target received/sent byte ratio
  Range conn_gap;             // gap between a host's successive connection starts
  Range idle;                 // pause between data bursts / page loads
  Range burst_gap;            // packet spacing inside a burst
  Range burst_packets;        // raw data packets per burst
  Range bursts;               // bursts per session
  Range requests;             // HTTP requests per session
  Range url_depth;
  Range url_params;
  Range response_bytes;
  Range rtt;
  double raw_tcp_floor = 0;   // minimum planted raw-TCP packet ratio
  double dns_ratio_cap = 1;   // maximum planted DNS packet ratio
  double tls_fraction = 0;
  double ip_only_fraction = 0;
  double second_window = 0;   // probability a pair stays active in window 2
  double close_prob = 0;      // sessions ending with a FIN exchange
  double failure_prob = 0;    // HTTP 4xx/5xx responses
  double html_fraction = 0;
  double image_fraction = 0;
  double udp_chatter = 0;     // probability of non-DNS UDP traffic per flow

  bool operator==(const DistributionParams&) const = default;
};

DistributionParams class_template(ClassLabel c);
// Template table with the measured anchor each row follows.
nlohmann::json template_table_json();

struct ScenarioSpec {
  std::string name;  // capture file stem; unique inside a corpus
  ClassLabel label = ClassLabel::LEGITIMATE;
  std::set<Ttp> ttps;
  DistributionParams params;
  std::uint64_t seed = 0;
  double duration = 900;
  double confound_rate = 0;  // legitimate flows given APT-like timing
  bool pcapng = false;
};

nlohmann::json to_json(const ScenarioSpec& s);
ScenarioSpec scenario_from_json(const nlohmann::json& j);

struct CorpusOptions {
  int n_apt = 65;
  int n_botnet = 55;
  int n_legitimate = 80;
  double confound_rate = 0.2;
  double duration = 900;
};

// Seeded scenario list: TTP subsets per APT capture, family traits per
// botnet, browsing hosts with confounds for the legitimate class.
std::vector<ScenarioSpec> default_corpus(std::uint64_t seed, const CorpusOptions& opt = {});

// Accepts {"seed":N,"corpus":{...}} or {"scenarios":[...]}.
std::vector<ScenarioSpec> specs_from_json(const nlohmann::json& j, std::uint64_t seed);

// Ground truth for one (host, server, window) flow.
struct PlantedFlow {
  std::string capture;
  ClassLabel label = ClassLabel::LEGITIMATE;
  std::set<Ttp> ttps;
  bool confound = false;
  std::string source;
  std::string destination;
  std::int64_t window = 0;
  std::string expect = "kept";  // "kept" or the hygiene reason it is removed
  std::int64_t packets = 0;
  double bytes_sent = 0;
  double bytes_received = 0;
  std::int64_t n_raw_tcp = 0;
  std::int64_t n_data_packets = 0;
  std::int64_t dns_requests = 0;
  std::int64_t fin_ack = 0;
  bool ip_only = false;
  double idle_max = 0;
  double idle_min = 0;
  double delta_mean = 0;
  std::vector<std::string> urls;  // distinct, sorted
  double target_received_sent = 0;

  double raw_tcp_ratio() const {
    return packets > 0 ? static_cast<double>(n_raw_tcp) / static_cast<double>(packets) : 0;
  }
};

struct SynthCapture {
  std::string name;
  std::filesystem::path path;
  ClassLabel label = ClassLabel::LEGITIMATE;
  std::set<Ttp> ttps;
  std::uint64_t seed = 0;
  double confound_rate = 0;
  std::size_t packets = 0;  // records written, the ARP frame included
};

struct PlantLedger {
  std::vector<SynthCapture> captures;
  std::vector<PlantedFlow> flows;
};

nlohmann::json to_json(const PlantedFlow& f);
PlantedFlow planted_flow_from_json(const nlohmann::json& j);

// Writes one capture per spec plus ledger.jsonl, labels.csv and
// domain_ages.txt into `out_dir`. Scenarios are generated in parallel.
PlantLedger generate_corpus(const std::vector<ScenarioSpec>& specs,
                            const std::filesystem::path& out_dir, int threads = 0);

// Builds a single capture in memory-free streaming fashion.
SynthCapture generate_capture(const ScenarioSpec& spec, const std::filesystem::path& out_dir,
                              std::vector<PlantedFlow>& flows,
                              std::map<std::string, double>& domain_ages);

PlantLedger read_ledger(const std::filesystem::path& dir);

struct LabelRow {
  std::string capture;
  ClassLabel label = ClassLabel::UNLABELED;
  std::set<Ttp> ttps;
};
// labels.csv: capture,class,ttps(';'-joined),seed,confound_rate
std::map<std::string, LabelRow> read_labels(const std::filesystem::path& csv);

}  // namespace ctxflow
