#include "ctxflow/profiler.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

namespace ctxflow {

using nlohmann::json;

namespace {

template <typename T>
void append(std::vector<T>& dst, const std::vector<T>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

// Reorders `v` by the permutation `order`.
template <typename T>
void permute(std::vector<T>& v, const std::vector<std::size_t>& order) {
  if (v.size() != order.size()) return;
  std::vector<T> out;
  out.reserve(v.size());
  for (std::size_t i : order) out.push_back(std::move(v[i]));
  v = std::move(out);
}

std::vector<std::size_t> order_by(const std::vector<FlowId>& ids) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  return order;
}

auto url_tuple(const UrlRecord& u) {
  return std::tie(u.url, u.fqdn_or_ip, u.path_depth, u.filename, u.extension, u.n_params,
                  u.n_values, u.n_fragments, u.has_encoded, u.has_query, u.raw_length);
}

void add_url(URLProfile& p, const UrlRecord& u) {
  p.urls.push_back(u);
  p.distinct_urls.insert(u.url);
  p.lengths.push_back(u.raw_length);
  p.depths.push_back(u.path_depth);
  p.params.push_back(u.n_params);
  p.values.push_back(u.n_values);
  p.fragments.push_back(u.n_fragments);
  if (u.has_query) ++p.has_query_count;
  if (u.filename) ++p.has_filename_count;
  if (u.extension == "exe") ++p.exe_count;
  if (u.has_encoded) ++p.encoded_count;
  if (u.extension) p.distinct_extensions.insert(*u.extension);
}

json flow_ids(const std::vector<FlowId>& ids) {
  json a = json::array();
  for (const auto& id : ids) a.push_back({id.cs_id, id.pf_id});
  return a;
}

}  // namespace

int count_packet_failures(const Planes& planes) {
  int n = 0;
  for (const auto& p : planes.tcp_data) {
    if (p.tag != "HTTP" || p.details.size() < 2 || p.details[0] != "Response") continue;
    const int status = std::atoi(p.details[1].c_str());
    if (status >= 400 && status <= 599) ++n;
  }
  return n;
}

std::vector<double> data_plane_gaps(const Planes& planes) {
  std::vector<double> gaps;
  const auto& d = planes.tcp_data;
  for (std::size_t i = 1; i < d.size(); ++i) gaps.push_back(d[i].timestamp - d[i - 1].timestamp);
  return gaps;
}

double connection_start_time(const PairFlow& flow) {
  std::optional<double> first;
  for (const auto* plane : {&flow.planes.tcp_control, &flow.planes.udp, &flow.planes.icmp}) {
    if (!plane->empty()) {
      const double t = plane->front().timestamp;
      first = first ? std::min(*first, t) : t;
    }
  }
  if (first) return *first;
  if (!flow.planes.tcp_data.empty()) return flow.planes.tcp_data.front().timestamp;
  return flow.time_window.start;
}

std::vector<std::string> url_keys(const PairFlow& flow) {
  std::vector<std::string> keys;
  for (const auto& u : flow.urls) keys.push_back(u.fqdn_or_ip);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

std::string primary_url_key(const PairFlow& flow) {
  std::map<std::string, int> freq;
  for (const auto& u : flow.urls) ++freq[u.fqdn_or_ip];
  std::string best;
  int best_n = 0;
  for (const auto& [k, n] : freq) {
    if (n > best_n) {
      best = k;
      best_n = n;
    }
  }
  return best;
}

void ProfileSet::add(const PairFlow& flow) {
  const HostKey hk{flow.pair.capture_name, flow.pair.source};
  const int resumed = count_fin_ack(flow.planes);
  const int dns = count_dns_requests(flow.planes);

  HostProfile& h = hosts[hk];
  h.host_key = hk;
  h.flows.push_back(flow.flow_id);
  h.connection_start_times.push_back(connection_start_time(flow));
  append(h.ua_strings, flow.user_agents);
  h.resumed_per_flow.push_back(resumed);
  h.dns_requests_per_flow.push_back(dns);
  (flow.ip_only() ? h.ip_only_connections : h.fqdn_connections) += 1;

  DestinationProfile& d = destinations[flow.pair.destination];
  d.dest_key = flow.pair.destination;
  d.flows.push_back(flow.flow_id);
  d.connected_hosts.insert(hk);
  d.sent_bytes.push_back(flow.stats.total_sent);
  d.received_bytes.push_back(flow.stats.total_received);
  append(d.idle_times, data_plane_gaps(flow.planes));
  d.packet_failures.push_back(count_packet_failures(flow.planes));
  d.resumed_per_flow.push_back(resumed);
  d.dns_requests_per_flow.push_back(dns);
  d.dns_ratio_per_flow.push_back(
      flow.stats.n_packets > 0 ? static_cast<double>(dns) / static_cast<double>(flow.stats.n_packets)
                               : 0.0);
  for (const auto& u : flow.urls) d.distinct_urls.insert(u.url);

  for (const auto& key : url_keys(flow)) {
    URLProfile& p = urls[key];
    p.url_key = key;
    p.flows.push_back(flow.flow_id);
    for (const auto& u : flow.urls) {
      if (u.fqdn_or_ip == key) add_url(p, u);
    }
  }
}

void ProfileSet::merge(const ProfileSet& other) {
  for (const auto& [k, o] : other.hosts) {
    HostProfile& h = hosts[k];
    h.host_key = k;
    append(h.flows, o.flows);
    append(h.connection_start_times, o.connection_start_times);
    append(h.ua_strings, o.ua_strings);
    append(h.resumed_per_flow, o.resumed_per_flow);
    append(h.dns_requests_per_flow, o.dns_requests_per_flow);
    h.ip_only_connections += o.ip_only_connections;
    h.fqdn_connections += o.fqdn_connections;
  }
  for (const auto& [k, o] : other.destinations) {
    DestinationProfile& d = destinations[k];
    d.dest_key = k;
    append(d.flows, o.flows);
    d.connected_hosts.insert(o.connected_hosts.begin(), o.connected_hosts.end());
    append(d.sent_bytes, o.sent_bytes);
    append(d.received_bytes, o.received_bytes);
    append(d.idle_times, o.idle_times);
    append(d.packet_failures, o.packet_failures);
    append(d.resumed_per_flow, o.resumed_per_flow);
    append(d.dns_requests_per_flow, o.dns_requests_per_flow);
    append(d.dns_ratio_per_flow, o.dns_ratio_per_flow);
    d.distinct_urls.insert(o.distinct_urls.begin(), o.distinct_urls.end());
  }
  for (const auto& [k, o] : other.urls) {
    URLProfile& p = urls[k];
    p.url_key = k;
    append(p.flows, o.flows);
    for (const auto& u : o.urls) add_url(p, u);
  }
}

void ProfileSet::normalize() {
  for (auto& [k, h] : hosts) {
    const auto order = order_by(h.flows);
    permute(h.flows, order);
    permute(h.resumed_per_flow, order);
    permute(h.dns_requests_per_flow, order);
    std::sort(h.connection_start_times.begin(), h.connection_start_times.end());
    std::sort(h.ua_strings.begin(), h.ua_strings.end());
  }
  for (auto& [k, d] : destinations) {
    const auto order = order_by(d.flows);
    permute(d.flows, order);
    permute(d.sent_bytes, order);
    permute(d.received_bytes, order);
    permute(d.packet_failures, order);
    permute(d.resumed_per_flow, order);
    permute(d.dns_requests_per_flow, order);
    permute(d.dns_ratio_per_flow, order);
    std::sort(d.idle_times.begin(), d.idle_times.end());
  }
  for (auto& [k, p] : urls) {
    std::sort(p.flows.begin(), p.flows.end());
    std::vector<UrlRecord> sorted = std::move(p.urls);
    std::sort(sorted.begin(), sorted.end(),
              [](const UrlRecord& a, const UrlRecord& b) { return url_tuple(a) < url_tuple(b); });
    URLProfile fresh;
    fresh.url_key = p.url_key;
    fresh.flows = std::move(p.flows);
    for (const auto& u : sorted) add_url(fresh, u);
    p = std::move(fresh);
  }
}

ProfileSet pivot_profiles(std::span<const PairFlow> flows) {
  ProfileSet set;
  for (const auto& f : flows) set.add(f);
  set.normalize();
  return set;
}

json to_json(const ProfileSet& ps) {
  json hosts = json::array();
  for (const auto& [k, h] : ps.hosts) {
    hosts.push_back({{"capture", k.first},
                     {"host", k.second.to_string()},
                     {"flows", flow_ids(h.flows)},
                     {"connection_start_times", h.connection_start_times},
                     {"user_agents", h.ua_strings},
                     {"resumed_per_flow", h.resumed_per_flow},
                     {"dns_requests_per_flow", h.dns_requests_per_flow},
                     {"ip_only_connections", h.ip_only_connections},
                     {"fqdn_connections", h.fqdn_connections}});
  }
  json dests = json::array();
  for (const auto& [k, d] : ps.destinations) {
    json connected = json::array();
    for (const auto& hk : d.connected_hosts) connected.push_back(hk.first + "|" + hk.second.to_string());
    dests.push_back({{"destination", k.to_string()},
                     {"flows", flow_ids(d.flows)},
                     {"connected_hosts", connected},
                     {"sent_bytes", d.sent_bytes},
                     {"received_bytes", d.received_bytes},
                     {"idle_times", d.idle_times},
                     {"packet_failures", d.packet_failures},
                     {"resumed_per_flow", d.resumed_per_flow},
                     {"dns_requests_per_flow", d.dns_requests_per_flow},
                     {"dns_ratio_per_flow", d.dns_ratio_per_flow},
                     {"distinct_urls", d.distinct_urls}});
  }
  json urls = json::array();
  for (const auto& [k, p] : ps.urls) {
    urls.push_back({{"url_key", k},
                    {"flows", flow_ids(p.flows)},
                    {"n_urls", p.urls.size()},
                    {"distinct_urls", p.distinct_urls},
                    {"has_query", p.has_query_count},
                    {"has_filename", p.has_filename_count},
                    {"exe", p.exe_count},
                    {"encoded", p.encoded_count},
                    {"extensions", p.distinct_extensions}});
  }
  return {{"hosts", hosts}, {"destinations", dests}, {"urls", urls}};
}

}  // namespace ctxflow
