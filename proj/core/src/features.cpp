#include "ctxflow/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ctxflow/error.hpp"
#include "ctxflow/stats.hpp"

namespace ctxflow {

using nlohmann::json;

namespace {

using G = SlotGroup;
using K = SlotKind;

constexpr std::array<SlotInfo, kFeatureCount> kSlots = {{
    {1, "total_bytes", G::Flow, K::Bytes, false},
    {2, "sent_received_ratio", G::Flow, K::Rate, false},
    {3, "ratio_raw_tcp", G::Flow, K::Ratio, false},
    {4, "ratio_raw_udp", G::Flow, K::Ratio, false},
    {5, "ratio_icmp", G::Flow, K::Ratio, false},
    {6, "ratio_dns", G::Flow, K::Ratio, false},
    {7, "ratio_http", G::Flow, K::Ratio, false},
    {8, "ratio_tls", G::Flow, K::Ratio, false},
    {9, "ratio_ssl", G::Flow, K::Ratio, false},
    {10, "ratio_2xx", G::Flow, K::Ratio, true},
    {11, "ratio_3xx", G::Flow, K::Ratio, true},
    {12, "ratio_4xx", G::Flow, K::Ratio, true},
    {13, "ratio_5xx", G::Flow, K::Ratio, true},
    {14, "ratio_get", G::Flow, K::Ratio, true},
    {15, "ratio_post", G::Flow, K::Ratio, true},
    {16, "content_length_total", G::Flow, K::Bytes, true},
    {17, "content_length_max", G::Flow, K::Bytes, true},
    {18, "content_length_min", G::Flow, K::Bytes, true},
    {19, "content_length_median", G::Flow, K::Bytes, true},
    {20, "ratio_ct_javascript", G::Flow, K::Ratio, true},
    {21, "ratio_ct_html", G::Flow, K::Ratio, true},
    {22, "ratio_ct_image", G::Flow, K::Ratio, true},
    {23, "ratio_ct_video", G::Flow, K::Ratio, true},
    {24, "ratio_ct_application", G::Flow, K::Ratio, true},
    {25, "ratio_ct_text", G::Flow, K::Ratio, true},
    {26, "ratio_ct_empty", G::Flow, K::Ratio, true},
    {27, "resumed_connections", G::Flow, K::Count, false},
    {28, "sma_n_below", G::Flow, K::Count, false},
    {29, "sma_n_above", G::Flow, K::Count, false},
    {30, "sma_ratio_below", G::Flow, K::Ratio, false},
    {31, "sma_ratio_above", G::Flow, K::Ratio, false},
    {32, "sma_n_outliers", G::Flow, K::Count, false},
    {33, "sma_ratio_outliers", G::Flow, K::Ratio, false},
    {34, "sma_magnitude_max", G::Flow, K::Bytes, false},
    {35, "sma_magnitude_min", G::Flow, K::Bytes, false},
    {36, "sma_magnitude_mean", G::Flow, K::Bytes, false},
    {37, "sma_magnitude_sd", G::Flow, K::Bytes, false},
    {38, "idle_max", G::Flow, K::Seconds, false},
    {39, "idle_min", G::Flow, K::Seconds, false},
    {40, "idle_mean", G::Flow, K::Seconds, false},
    {41, "active_duration", G::Flow, K::Seconds, false},
    {42, "ttl_max", G::Flow, K::Ttl, false},
    {43, "ttl_min", G::Flow, K::Ttl, false},
    {44, "ttl_mean", G::Flow, K::Ttl, false},
    {45, "ttl_sd", G::Flow, K::Ttl, false},
    {46, "delta_max", G::Flow, K::Seconds, false},
    {47, "delta_min", G::Flow, K::Seconds, false},
    {48, "delta_mean", G::Flow, K::Seconds, false},
    {49, "delta_sd", G::Flow, K::Seconds, false},
    {50, "dns_requests", G::Flow, K::Count, false},
    {51, "host_mtdsc_max", G::Host, K::Seconds, false},
    {52, "host_mtdsc_min", G::Host, K::Seconds, false},
    {53, "host_mtdsc_mean", G::Host, K::Seconds, false},
    {54, "host_ip_only_to_fqdn", G::Host, K::Rate, false},
    {55, "host_resumed_per_flow_max", G::Host, K::Count, false},
    {56, "host_resumed_per_flow_min", G::Host, K::Count, false},
    {57, "host_resumed_per_flow_mean", G::Host, K::Count, false},
    {58, "host_dns_requests_per_flow", G::Host, K::Count, false},
    {59, "host_distinct_uas", G::Host, K::Count, true},
    {60, "host_navg_ua_popularity", G::Host, K::Ratio, true},
    {61, "host_frac_ua_1", G::Host, K::Ratio, true},
    {62, "host_frac_ua_5", G::Host, K::Ratio, true},
    {63, "host_ratio_uas", G::Host, K::Rate, true},
    {64, "dest_connected_hosts", G::Destination, K::Count, false},
    {65, "dest_received_sent_max", G::Destination, K::Rate, false},
    {66, "dest_received_sent_min", G::Destination, K::Rate, false},
    {67, "dest_received_sent_mean", G::Destination, K::Rate, false},
    {68, "dest_idle_max", G::Destination, K::Seconds, false},
    {69, "dest_idle_min", G::Destination, K::Seconds, false},
    {70, "dest_idle_mean", G::Destination, K::Seconds, false},
    {71, "dest_resumed_per_flow", G::Destination, K::Count, false},
    {72, "dest_distinct_urls", G::Destination, K::Count, true},
    {73, "dest_failures_max", G::Destination, K::Count, true},
    {74, "dest_failures_min", G::Destination, K::Count, true},
    {75, "dest_failures_mean", G::Destination, K::Count, true},
    {76, "dest_dns_requests_max", G::Destination, K::Count, false},
    {77, "dest_dns_requests_min", G::Destination, K::Count, false},
    {78, "dest_dns_requests_mean", G::Destination, K::Count, false},
    {79, "dest_dns_ratio_max", G::Destination, K::Ratio, false},
    {80, "dest_dns_ratio_min", G::Destination, K::Ratio, false},
    {81, "dest_dns_ratio_mean", G::Destination, K::Ratio, false},
    {82, "url_frac_filename", G::Url, K::Ratio, true},
    {83, "url_frac_exe", G::Url, K::Ratio, true},
    {84, "url_distinct_extensions", G::Url, K::Count, true},
    {85, "url_length_max", G::Url, K::Count, true},
    {86, "url_length_min", G::Url, K::Count, true},
    {87, "url_length_mean", G::Url, K::Count, true},
    {88, "url_depth_max", G::Url, K::Count, true},
    {89, "url_depth_min", G::Url, K::Count, true},
    {90, "url_depth_mean", G::Url, K::Count, true},
    {91, "url_params_max", G::Url, K::Count, true},
    {92, "url_params_min", G::Url, K::Count, true},
    {93, "url_params_mean", G::Url, K::Count, true},
    {94, "url_values_max", G::Url, K::Count, true},
    {95, "url_values_min", G::Url, K::Count, true},
    {96, "url_values_mean", G::Url, K::Count, true},
    {97, "url_fragments_max", G::Url, K::Count, true},
    {98, "url_fragments_min", G::Url, K::Count, true},
    {99, "url_fragments_mean", G::Url, K::Count, true},
    {100, "url_frac_query", G::Url, K::Ratio, true},
    {101, "url_count_encoded", G::Url, K::Count, true},
    {102, "url_distinct_count", G::Url, K::Count, true},
}};

std::string_view group_name(SlotGroup g) {
  switch (g) {
    case G::Flow: return "flow";
    case G::Host: return "host";
    case G::Destination: return "destination";
    case G::Url: return "url";
  }
  return "flow";
}

std::string_view kind_name(SlotKind k) {
  switch (k) {
    case K::Count: return "count";
    case K::Ratio: return "ratio";
    case K::Rate: return "rate";
    case K::Bytes: return "bytes";
    case K::Seconds: return "seconds";
    case K::Ttl: return "ttl";
  }
  return "count";
}

void set_summary(FeatureVector& out, int first, const Summary& s, bool with_mean = true) {
  out.set(first, s.max, s.present);
  out.set(first + 1, s.min, s.present);
  if (with_mean) out.set(first + 2, s.mean, s.present);
}

void set_triple(FeatureVector& out, int first, const TimingTriple& t) {
  out.set(first, t.max, t.present);
  out.set(first + 1, t.min, t.present);
  out.set(first + 2, t.mean, t.present);
}

TimingTriple triple_of(const std::vector<double>& xs) {
  const Summary s = summarize(xs);
  return {s.max, s.min, s.mean, s.present};
}

enum class ContentClass { JavaScript, Html, Image, Video, Application, Text, Empty, Other };

ContentClass classify_content(std::string_view ct) {
  if (ct == "Empty Content" || ct.empty()) return ContentClass::Empty;
  if (ct.find("javascript") != std::string_view::npos ||
      ct.find("ecmascript") != std::string_view::npos) {
    return ContentClass::JavaScript;
  }
  if (ct.find("html") != std::string_view::npos) return ContentClass::Html;
  if (ct.starts_with("image/")) return ContentClass::Image;
  if (ct.starts_with("video/")) return ContentClass::Video;
  if (ct.starts_with("application/")) return ContentClass::Application;
  if (ct.starts_with("text/")) return ContentClass::Text;
  return ContentClass::Other;
}

}  // namespace

std::string_view to_string(Mode m) { return m == Mode::HTTP ? "http" : "https"; }

Mode parse_mode(std::string_view text) {
  if (text == "http" || text == "HTTP") return Mode::HTTP;
  if (text == "https" || text == "HTTPS") return Mode::HTTPS;
  throw ConfigError("unknown mode '" + std::string(text) + "' (expected http or https)");
}

const std::array<SlotInfo, kFeatureCount>& slot_table() { return kSlots; }

const SlotInfo& slot_info(int id) {
  if (id < 1 || id > static_cast<int>(kFeatureCount)) {
    throw std::out_of_range("feature slot out of range: " + std::to_string(id));
  }
  return kSlots[static_cast<std::size_t>(id - 1)];
}

FeatureBits mode_mask(Mode m) {
  FeatureBits bits;
  for (const auto& s : kSlots) {
    if (s.kind == K::Ttl) continue;
    if (m == Mode::HTTPS && s.plaintext_http) continue;
    bits.set(static_cast<std::size_t>(s.id - 1));
  }
  return bits;
}

json mask_table_json() {
  const FeatureBits http = mode_mask(Mode::HTTP);
  const FeatureBits https = mode_mask(Mode::HTTPS);
  json slots = json::array();
  for (const auto& s : kSlots) {
    const auto i = static_cast<std::size_t>(s.id - 1);
    slots.push_back({{"id", s.id},
                     {"name", s.name},
                     {"group", group_name(s.group)},
                     {"kind", kind_name(s.kind)},
                     {"http", static_cast<bool>(http[i])},
                     {"https", static_cast<bool>(https[i])}});
  }
  return {{"active_http", http.count()}, {"active_https", https.count()}, {"slots", slots}};
}

FeatureVector apply_mode_mask(FeatureVector v, Mode mode) {
  const FeatureBits bits = mode_mask(mode);
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!bits[i]) {
      v.values[i] = 0;
      v.present[i] = false;
    }
  }
  v.mask = mode;
  return v;
}

SmaSeries build_sma(std::span<const PlanePoint> data_plane, double sample_rate, int k) {
  if (!(sample_rate > 0)) throw ConfigError("SMA sample rate must be positive");
  if (k < 1) throw ConfigError("SMA window k must be at least 1");
  SmaSeries s;
  s.sample_rate = sample_rate;
  s.k = k;
  if (data_plane.empty()) return s;

  auto bucket = [&](double ts) {
    return static_cast<std::int64_t>(std::floor(ts / sample_rate)) + 1;
  };
  std::int64_t lo = bucket(data_plane.front().timestamp);
  std::int64_t hi = lo;
  for (const auto& p : data_plane) {
    lo = std::min(lo, bucket(p.timestamp));
    hi = std::max(hi, bucket(p.timestamp));
  }
  std::vector<double> sums(static_cast<std::size_t>(hi - lo + 1), 0.0);
  for (const auto& p : data_plane) sums[static_cast<std::size_t>(bucket(p.timestamp) - lo)] += p.length;

  s.points.reserve(sums.size());
  s.sma_values.reserve(sums.size());
  // Bucket sums are whole byte counts, so the sliding sum stays exact.
  double window = 0;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    s.points.emplace_back(lo + static_cast<std::int64_t>(i), sums[i]);
    window += sums[i];
    if (i >= static_cast<std::size_t>(k)) window -= sums[i - static_cast<std::size_t>(k)];
    const std::size_t n = std::min<std::size_t>(i + 1, static_cast<std::size_t>(k));
    s.sma_values.push_back(window / static_cast<double>(n));
  }
  s.present = true;
  return s;
}

SmaFeatures sma_features(const SmaSeries& series) {
  SmaFeatures f;
  if (!series.present || series.points.empty()) return f;
  f.present = true;
  std::vector<double> magnitudes;
  for (std::size_t i = 0; i < series.points.size(); ++i) {
    const double p = series.points[i].second;
    const double m = series.sma_values[i];
    if (p < m) f.n_below += 1;
    if (p > m) f.n_above += 1;
    if (p > 2 * m) magnitudes.push_back(p - m);
  }
  const double n = static_cast<double>(series.points.size());
  f.ratio_below = f.n_below / n;
  f.ratio_above = f.n_above / n;
  f.n_outliers = static_cast<double>(magnitudes.size());
  f.ratio_outliers = f.n_outliers / n;
  const Summary s = summarize(magnitudes);
  f.magnitude_present = s.present;
  f.magnitude_max = s.max;
  f.magnitude_min = s.min;
  f.magnitude_mean = s.mean;
  f.magnitude_sd = s.sd;
  return f;
}

TimingTriple idle_time_features(std::span<const PlanePoint> data_plane) {
  std::vector<double> gaps;
  for (std::size_t i = 1; i < data_plane.size(); ++i) {
    gaps.push_back(data_plane[i].timestamp - data_plane[i - 1].timestamp);
  }
  return triple_of(gaps);
}

TimingTriple mtdsc(const HostProfile& host) {
  std::vector<double> starts = host.connection_start_times;
  std::sort(starts.begin(), starts.end());
  std::vector<double> gaps;
  for (std::size_t i = 1; i < starts.size(); ++i) gaps.push_back(starts[i] - starts[i - 1]);
  return triple_of(gaps);
}

UaIndex UaIndex::build(const ProfileSet& profiles) {
  UaIndex idx;
  idx.total_hosts = static_cast<int>(profiles.hosts.size());
  for (const auto& [k, h] : profiles.hosts) {
    const std::set<std::string> distinct(h.ua_strings.begin(), h.ua_strings.end());
    for (const auto& ua : distinct) ++idx.hosts_per_ua[ua];
  }
  return idx;
}

void flow_features(const PairFlow& flow, const FeatureConfig& cfg, FeatureVector& out) {
  const InitialStats& s = flow.stats;
  const Planes& pl = flow.planes;
  const double n = static_cast<double>(s.n_packets);
  const bool any = s.n_packets > 0;

  out.set(1, s.total_bytes);
  out.set(2, safe_ratio(s.total_sent, s.total_received), s.total_received > 0);
  const std::int64_t counts[] = {s.n_raw_tcp, s.n_raw_udp, s.n_icmp, s.n_dns,
                                 s.n_http,    s.n_tls,     s.n_ssl};
  for (int i = 0; i < 7; ++i) out.set(3 + i, any ? static_cast<double>(counts[i]) / n : 0, any);

  int responses = 0, requests = 0, http_points = 0;
  double status_class[4] = {0, 0, 0, 0};
  double get = 0, post = 0;
  double ct[7] = {0, 0, 0, 0, 0, 0, 0};
  for (const auto& p : pl.tcp_data) {
    if (p.tag != "HTTP" || p.details.size() < 3) continue;
    ++http_points;
    if (p.details[0] == "Response") {
      ++responses;
      const int cls = std::atoi(p.details[1].c_str()) / 100;
      if (cls >= 2 && cls <= 5) status_class[cls - 2] += 1;
    } else {
      ++requests;
      if (p.details[1] == "GET") get += 1;
      if (p.details[1] == "POST") post += 1;
    }
    const ContentClass c = classify_content(p.details[2]);
    if (c != ContentClass::Other) ct[static_cast<int>(c)] += 1;
  }
  for (int i = 0; i < 4; ++i) out.set(10 + i, safe_ratio(status_class[i], responses), responses > 0);
  out.set(14, safe_ratio(get, requests), requests > 0);
  out.set(15, safe_ratio(post, requests), requests > 0);

  const bool has_http = s.n_http > 0;
  out.set(16, s.content_length_total, has_http);
  out.set(17, s.content_length_max, has_http);
  out.set(18, s.content_length_min, has_http);
  out.set(19, s.content_length_median, has_http);
  for (int i = 0; i < 7; ++i) out.set(20 + i, safe_ratio(ct[i], http_points), http_points > 0);

  out.set(27, count_fin_ack(pl));

  const SmaFeatures sma = sma_features(build_sma(pl.tcp_data, cfg.sma_sample_rate, cfg.sma_k));
  out.set(28, sma.n_below, sma.present);
  out.set(29, sma.n_above, sma.present);
  out.set(30, sma.ratio_below, sma.present);
  out.set(31, sma.ratio_above, sma.present);
  out.set(32, sma.n_outliers, sma.present);
  out.set(33, sma.ratio_outliers, sma.present);
  out.set(34, sma.magnitude_max, sma.magnitude_present);
  out.set(35, sma.magnitude_min, sma.magnitude_present);
  out.set(36, sma.magnitude_mean, sma.magnitude_present);
  out.set(37, sma.magnitude_sd, sma.magnitude_present);

  set_triple(out, 38, idle_time_features(pl.tcp_data));
  const bool has_data = !pl.tcp_data.empty();
  out.set(41, has_data ? pl.tcp_data.back().timestamp - pl.tcp_data.front().timestamp : 0,
          has_data);

  out.set(42, s.ttl_max, any);
  out.set(43, s.ttl_min, any);
  out.set(44, s.ttl_mean, any);
  out.set(45, s.ttl_sd, any);

  const bool has_delta = s.n_packets >= 2;
  out.set(46, s.delta_max, has_delta);
  out.set(47, s.delta_min, has_delta);
  out.set(48, s.delta_mean, has_delta);
  out.set(49, s.delta_sd, has_delta);
  out.set(50, count_dns_requests(pl));
}

void host_features(const HostProfile& host, const UaIndex& uas, FeatureVector& out) {
  set_triple(out, 51, mtdsc(host));
  out.set(54, static_cast<double>(host.ip_only_connections) /
                  static_cast<double>(std::max(host.fqdn_connections, 1)));
  set_summary(out, 55, summarize(host.resumed_per_flow));
  out.set(58, summarize(host.dns_requests_per_flow).mean, !host.dns_requests_per_flow.empty());

  const std::set<std::string> distinct(host.ua_strings.begin(), host.ua_strings.end());
  out.set(59, static_cast<double>(distinct.size()));
  const bool has_ua = !distinct.empty() && uas.total_hosts > 0;
  double pop = 0, le1 = 0, le5 = 0;
  for (const auto& ua : distinct) {
    auto it = uas.hosts_per_ua.find(ua);
    const int users = it == uas.hosts_per_ua.end() ? 1 : it->second;
    pop += static_cast<double>(users) / static_cast<double>(std::max(uas.total_hosts, 1));
    if (users <= 1) le1 += 1;
    if (users <= 5) le5 += 1;
  }
  const double nd = static_cast<double>(distinct.size());
  out.set(60, has_ua ? pop / nd : 0, has_ua);
  out.set(61, has_ua ? le1 / nd : 0, has_ua);
  out.set(62, has_ua ? le5 / nd : 0, has_ua);
  out.set(63, safe_ratio(nd, static_cast<double>(host.flows.size())), !host.flows.empty());
}

void destination_features(const DestinationProfile& dest, FeatureVector& out) {
  out.set(64, static_cast<double>(dest.connected_hosts.size()));
  std::vector<double> ratios;
  for (std::size_t i = 0; i < dest.sent_bytes.size() && i < dest.received_bytes.size(); ++i) {
    if (dest.sent_bytes[i] > 0) ratios.push_back(dest.received_bytes[i] / dest.sent_bytes[i]);
  }
  set_summary(out, 65, summarize(ratios));
  set_summary(out, 68, summarize(dest.idle_times));
  out.set(71, summarize(dest.resumed_per_flow).mean, !dest.resumed_per_flow.empty());
  out.set(72, static_cast<double>(dest.distinct_urls.size()));
  set_summary(out, 73, summarize(dest.packet_failures));
  set_summary(out, 76, summarize(dest.dns_requests_per_flow));
  set_summary(out, 79, summarize(dest.dns_ratio_per_flow));
}

void url_features(const URLProfile& url, FeatureVector& out) {
  const double n = static_cast<double>(url.urls.size());
  const bool any = !url.urls.empty();
  out.set(82, any ? url.has_filename_count / n : 0, any);
  out.set(83, any ? url.exe_count / n : 0, any);
  out.set(84, static_cast<double>(url.distinct_extensions.size()), any);
  set_summary(out, 85, summarize(url.lengths));
  set_summary(out, 88, summarize(url.depths));
  set_summary(out, 91, summarize(url.params));
  set_summary(out, 94, summarize(url.values));
  set_summary(out, 97, summarize(url.fragments));
  out.set(100, any ? url.has_query_count / n : 0, any);
  out.set(101, url.encoded_count, any);
  out.set(102, static_cast<double>(url.distinct_urls.size()), any);
}

FeatureExtractor::FeatureExtractor(const ProfileSet& profiles, FeatureConfig cfg)
    : profiles_(profiles), cfg_(cfg), uas_(UaIndex::build(profiles)) {}

FeatureVector FeatureExtractor::extract(const PairFlow& flow) const {
  FeatureVector v;
  v.flow_id = flow.flow_id;
  const HostKey hk{flow.pair.capture_name, flow.pair.source};
  v.host_key = hk.first + "|" + hk.second.to_string();
  v.dest_key = flow.pair.destination.to_string();
  v.url_key = primary_url_key(flow);

  flow_features(flow, cfg_, v);
  if (auto it = profiles_.hosts.find(hk); it != profiles_.hosts.end()) {
    host_features(it->second, uas_, v);
  }
  if (auto it = profiles_.destinations.find(flow.pair.destination);
      it != profiles_.destinations.end()) {
    destination_features(it->second, v);
  }
  if (!v.url_key.empty()) {
    if (auto it = profiles_.urls.find(v.url_key); it != profiles_.urls.end()) {
      url_features(it->second, v);
    }
  }
  return apply_mode_mask(std::move(v), Mode::HTTP);
}

std::vector<std::string> feature_column_names() {
  std::vector<std::string> names;
  for (std::size_t i = 1; i <= kFeatureCount; ++i) names.push_back(std::to_string(i));
  return names;
}

}  // namespace ctxflow
