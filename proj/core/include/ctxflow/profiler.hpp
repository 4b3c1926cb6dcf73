#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxflow/pairflow.hpp"

namespace ctxflow {

// (capture name, source address)
using HostKey = std::pair<std::string, IpAddress>;

struct HostProfile {
  HostKey host_key;
  std::vector<FlowId> flows;
  std::vector<double> connection_start_times;
  std::vector<std::string> ua_strings;  // multiset, kept sorted
  std::vector<double> resumed_per_flow;
  std::vector<double> dns_requests_per_flow;
  int ip_only_connections = 0;
  int fqdn_connections = 0;

  bool operator==(const HostProfile&) const = default;
};

struct DestinationProfile {
  IpAddress dest_key;
  std::vector<FlowId> flows;
  std::set<HostKey> connected_hosts;
  std::vector<double> sent_bytes;
  std::vector<double> received_bytes;
  std::vector<double> idle_times;  // data-plane gaps pooled over flows
  std::vector<double> packet_failures;
  std::vector<double> resumed_per_flow;
  std::vector<double> dns_requests_per_flow;
  std::vector<double> dns_ratio_per_flow;  // DNS requests / packets
  std::set<std::string> distinct_urls;

  bool operator==(const DestinationProfile&) const = default;
};

struct URLProfile {
  std::string url_key;
  std::vector<FlowId> flows;
  std::vector<UrlRecord> urls;
  std::set<std::string> distinct_urls;
  std::vector<double> lengths, depths, params, values, fragments;
  int has_query_count = 0;
  int has_filename_count = 0;
  int exe_count = 0;
  int encoded_count = 0;
  std::set<std::string> distinct_extensions;

  bool operator==(const URLProfile&) const = default;
};

struct ProfileSet {
  std::map<HostKey, HostProfile> hosts;
  std::map<IpAddress, DestinationProfile> destinations;
  std::map<std::string, URLProfile> urls;

  void add(const PairFlow& flow);
  // Associative merge; call normalize() afterwards for canonical order.
  void merge(const ProfileSet& other);
  // Sorts every list so equal multisets compare equal.
  void normalize();

  bool operator==(const ProfileSet&) const = default;
};

// Hosts and destinations partition the flows; the URL pivot is a cover keyed
// by each distinct FQDN or IP string appearing in the flow's URLs.
ProfileSet pivot_profiles(std::span<const PairFlow> flows);

// Distinct URL keys of a flow, sorted.
std::vector<std::string> url_keys(const PairFlow& flow);
// Key used for the flow's URL-profile features: the most frequent URL key,
// ties broken lexicographically. Empty when the flow carries no URL.
std::string primary_url_key(const PairFlow& flow);

// Count of HTTP responses with a 4xx or 5xx status in the data plane.
int count_packet_failures(const Planes& planes);
// Gaps between consecutive data-plane timestamps.
std::vector<double> data_plane_gaps(const Planes& planes);
// First control/UDP/ICMP packet time; falls back to the first data packet.
double connection_start_time(const PairFlow& flow);

nlohmann::json to_json(const ProfileSet& profiles);

}  // namespace ctxflow
