#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxflow/pairflow.hpp"
#include "ctxflow/profiler.hpp"

namespace ctxflow {

inline constexpr std::size_t kFeatureCount = 102;
using FeatureBits = std::bitset<kFeatureCount>;

enum class Mode : std::uint8_t { HTTP, HTTPS };
std::string_view to_string(Mode m);
Mode parse_mode(std::string_view text);  // "http" / "https"; ConfigError otherwise

enum class SlotGroup : std::uint8_t { Flow, Host, Destination, Url };

enum class SlotKind : std::uint8_t {
  Count,
  Ratio,    // bounded to [0, 1]
  Rate,     // quotient without an upper bound
  Bytes,
  Seconds,
  Ttl,
};

struct SlotInfo {
  int id = 0;  // 1-based
  std::string_view name;
  SlotGroup group = SlotGroup::Flow;
  SlotKind kind = SlotKind::Count;
  bool plaintext_http = false;  // derived from plaintext HTTP content
};

const std::array<SlotInfo, kFeatureCount>& slot_table();
const SlotInfo& slot_info(int id);

// Slots available to classifiers in a mode. TTL slots are never active.
FeatureBits mode_mask(Mode m);
// Slot -> mode availability table, written next to features.csv.
nlohmann::json mask_table_json();

struct FeatureVector {
  std::array<double, kFeatureCount> values{};
  FeatureBits present;  // false: slot absent (empty denominator, masked, ...)
  Mode mask = Mode::HTTP;
  FlowId flow_id;
  std::string host_key;
  std::string dest_key;
  std::string url_key;

  double& at(int id) { return values[static_cast<std::size_t>(id - 1)]; }
  double at(int id) const { return values[static_cast<std::size_t>(id - 1)]; }
  void set(int id, double v, bool is_present = true) {
    values[static_cast<std::size_t>(id - 1)] = v;
    present[static_cast<std::size_t>(id - 1)] = is_present;
  }
  bool has(int id) const { return present[static_cast<std::size_t>(id - 1)]; }

  bool operator==(const FeatureVector&) const = default;
};

// Zeroes and flags absent every slot outside mode_mask(mode). Idempotent.
FeatureVector apply_mode_mask(FeatureVector v, Mode mode);

struct SmaSeries {
  double sample_rate = 1.0;
  int k = 1;
  // (bucket index, summed bytes). Bucket n collects packets arriving in
  // [(n-1)*rate, n*rate); gaps inside the active span are zero-filled.
  std::vector<std::pair<std::int64_t, double>> points;
  std::vector<double> sma_values;
  bool present = false;
};

SmaSeries build_sma(std::span<const PlanePoint> data_plane, double sample_rate,
                    int k);

struct SmaFeatures {
  double n_below = 0, n_above = 0;
  double ratio_below = 0, ratio_above = 0;
  double n_outliers = 0, ratio_outliers = 0;
  double magnitude_max = 0, magnitude_min = 0, magnitude_mean = 0,
         magnitude_sd = 0;
  bool present = false;
  bool magnitude_present = false;
};

// Points equal to their SMA count as neither below nor above. An outlier is a
// point strictly greater than twice its SMA.
SmaFeatures sma_features(const SmaSeries& series);

struct TimingTriple {
  double max = 0, min = 0, mean = 0;
  bool present = false;
};

TimingTriple idle_time_features(std::span<const PlanePoint> data_plane);
TimingTriple mtdsc(const HostProfile& host);

struct FeatureConfig {
  double sma_sample_rate = 1.0;
  int sma_k = 600;
};

// Enterprise-wide UA usage: UA string -> number of distinct hosts using it.
struct UaIndex {
  std::map<std::string, int> hosts_per_ua;
  int total_hosts = 0;

  static UaIndex build(const ProfileSet& profiles);
};

void flow_features(const PairFlow& flow, const FeatureConfig& cfg,
                   FeatureVector& out);
void host_features(const HostProfile& host, const UaIndex& uas,
                   FeatureVector& out);
void destination_features(const DestinationProfile& dest, FeatureVector& out);
void url_features(const URLProfile& url, FeatureVector& out);

// Full 102-slot vector for one flow against the profiles of its interval.
class FeatureExtractor {
 public:
  FeatureExtractor(const ProfileSet& profiles, FeatureConfig cfg);
  FeatureVector extract(const PairFlow& flow) const;

 private:
  const ProfileSet& profiles_;
  FeatureConfig cfg_;
  UaIndex uas_;
};

// CSV header names ("1".."102").
std::vector<std::string> feature_column_names();

}  // namespace ctxflow
