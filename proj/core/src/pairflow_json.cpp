#include "ctxflow/pairflow_json.hpp"

#include "ctxflow/error.hpp"

namespace ctxflow {

using nlohmann::json;

namespace {

json point_json(const PlanePoint& p) {
  return json::array({p.packet_index, p.tag, p.details, p.timestamp, p.length, p.outbound});
}

PlanePoint point_from_json(const json& j) {
  if (!j.is_array() || j.size() < 5) throw FormatError("bad plane point: " + j.dump());
  PlanePoint p;
  p.packet_index = j[0].get<std::uint64_t>();
  p.tag = j[1].get<std::string>();
  p.details = j[2].get<std::vector<std::string>>();
  p.timestamp = j[3].get<double>();
  p.length = j[4].get<std::uint32_t>();
  p.outbound = j.size() > 5 ? j[5].get<bool>() : true;
  return p;
}

json plane_json(const std::vector<PlanePoint>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back(point_json(p));
  return a;
}

std::vector<PlanePoint> plane_from_json(const json& j, const char* key) {
  std::vector<PlanePoint> out;
  if (!j.contains(key)) return out;
  for (const auto& p : j.at(key)) out.push_back(point_from_json(p));
  return out;
}

TlsMeta tls_from_json(const json& j, TlsMeta::Role role) {
  TlsMeta t;
  t.role = role;
  if (!j.is_object()) return t;
  t.cipher_suites = j.value("ciphersuites", std::vector<std::string>{});
  t.extension_types = j.value("extension_types", std::vector<std::string>{});
  t.signature_algorithms = j.value("signature_algorithms", std::vector<std::string>{});
  t.supported_groups = j.value("supported_groups", std::vector<std::string>{});
  t.alpn_protocols = j.value("alpn", std::vector<std::string>{});
  t.ec_point_formats = j.value("ec_point_formats", std::vector<std::string>{});
  t.handshake_bytes = j.value("handshake_bytes", 0u);
  t.cipher_suite_bytes = j.value("cipher_suite_bytes", 0u);
  t.extension_bytes = j.value("extension_bytes", 0u);
  return t;
}

UrlRecord url_from_json(const json& j) {
  UrlRecord u;
  u.url = j.at("url").get<std::string>();
  u.fqdn_or_ip = j.at("fqdn_or_ip").get<std::string>();
  u.path_depth = j.at("depth").get<int>();
  if (j.contains("filename") && !j["filename"].is_null()) {
    u.filename = j["filename"].get<std::string>();
  }
  if (j.contains("extension") && !j["extension"].is_null()) {
    u.extension = j["extension"].get<std::string>();
  }
  u.n_params = j.at("params").get<int>();
  u.n_values = j.at("values").get<int>();
  u.n_fragments = j.at("fragments").get<int>();
  u.has_encoded = j.at("encoded").get<bool>();
  u.has_query = j.at("query").get<bool>();
  u.raw_length = j.at("length").get<int>();
  return u;
}

FqdnRecord fqdn_from_json(const json& j) {
  FqdnRecord r;
  r.fqdn = j.at("fqdn").get<std::string>();
  r.ns_records = j.value("ns", std::vector<std::string>{});
  r.a_records = j.value("a", std::vector<std::string>{});
  if (j.contains("age_days") && !j["age_days"].is_null()) {
    r.domain_age_days = j["age_days"].get<double>();
  }
  return r;
}

}  // namespace

json to_json(const Planes& p) {
  return {{"tcp_control", plane_json(p.tcp_control)},
          {"tcp_data", plane_json(p.tcp_data)},
          {"udp", plane_json(p.udp)},
          {"icmp", plane_json(p.icmp)}};
}

Planes planes_from_json(const json& j) {
  Planes p;
  p.tcp_control = plane_from_json(j, "tcp_control");
  p.tcp_data = plane_from_json(j, "tcp_data");
  p.udp = plane_from_json(j, "udp");
  p.icmp = plane_from_json(j, "icmp");
  return p;
}

json to_json(const TlsMeta& t) {
  return {{"ciphersuites", t.cipher_suites},
          {"extension_types", t.extension_types},
          {"signature_algorithms", t.signature_algorithms},
          {"supported_groups", t.supported_groups},
          {"alpn", t.alpn_protocols},
          {"ec_point_formats", t.ec_point_formats},
          {"handshake_bytes", t.handshake_bytes},
          {"cipher_suite_bytes", t.cipher_suite_bytes},
          {"extension_bytes", t.extension_bytes}};
}

json to_json(const UrlRecord& u) {
  return {{"url", u.url},
          {"fqdn_or_ip", u.fqdn_or_ip},
          {"depth", u.path_depth},
          {"filename", u.filename ? json(*u.filename) : json(nullptr)},
          {"extension", u.extension ? json(*u.extension) : json(nullptr)},
          {"params", u.n_params},
          {"values", u.n_values},
          {"fragments", u.n_fragments},
          {"encoded", u.has_encoded},
          {"query", u.has_query},
          {"length", u.raw_length}};
}

json to_json(const FqdnRecord& r) {
  return {{"fqdn", r.fqdn},
          {"ns", r.ns_records},
          {"a", r.a_records},
          {"age_days", r.domain_age_days ? json(*r.domain_age_days) : json(nullptr)}};
}

json to_json(const InitialStats& s) {
  return {
      {"f30_total_bytes", s.total_bytes},
      {"f31_total_sent", s.total_sent},
      {"f32_total_received", s.total_received},
      {"f33_total_encrypted", s.total_encrypted},
      {"f34_encrypted_sent", s.encrypted_sent},
      {"f35_encrypted_received", s.encrypted_received},
      {"f36_n_raw_tcp", s.n_raw_tcp},
      {"f37_n_raw_udp", s.n_raw_udp},
      {"f38_n_icmp", s.n_icmp},
      {"f39_n_dns", s.n_dns},
      {"f40_n_http", s.n_http},
      {"f41_n_tls", s.n_tls},
      {"f42_n_ssl", s.n_ssl},
      {"f43_duration", s.duration},
      {"f44_ttl_max", s.ttl_max},
      {"f45_ttl_min", s.ttl_min},
      {"f46_ttl_mean", s.ttl_mean},
      {"f47_48_ttl_sd", s.ttl_sd},
      {"f49_delta_max", s.delta_max},
      {"f50_delta_min", s.delta_min},
      {"f51_delta_mean", s.delta_mean},
      {"f52_delta_sd", s.delta_sd},
      {"f53_content_length_total", s.content_length_total},
      {"f54_content_length_max", s.content_length_max},
      {"f55_content_length_min", s.content_length_min},
      {"f56_content_length_median", s.content_length_median},
      {"f57_59_cs_bytes",
       {{"server", {s.server_cs_bytes_max, s.server_cs_bytes_min, s.server_cs_bytes_median}},
        {"client", {s.client_cs_bytes_max, s.client_cs_bytes_min, s.client_cs_bytes_median}}}},
      {"f60_62_ext_bytes",
       {{"server", {s.server_ext_bytes_max, s.server_ext_bytes_min, s.server_ext_bytes_median}},
        {"client", {s.client_ext_bytes_max, s.client_ext_bytes_min, s.client_ext_bytes_median}}}},
      {"n_packets", s.n_packets},
      {"n_tcp_total", s.n_tcp_total},
  };
}

InitialStats stats_from_json(const json& j) {
  InitialStats s;
  auto num = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  num("f30_total_bytes", s.total_bytes);
  num("f31_total_sent", s.total_sent);
  num("f32_total_received", s.total_received);
  num("f33_total_encrypted", s.total_encrypted);
  num("f34_encrypted_sent", s.encrypted_sent);
  num("f35_encrypted_received", s.encrypted_received);
  num("f36_n_raw_tcp", s.n_raw_tcp);
  num("f37_n_raw_udp", s.n_raw_udp);
  num("f38_n_icmp", s.n_icmp);
  num("f39_n_dns", s.n_dns);
  num("f40_n_http", s.n_http);
  num("f41_n_tls", s.n_tls);
  num("f42_n_ssl", s.n_ssl);
  num("f43_duration", s.duration);
  num("f44_ttl_max", s.ttl_max);
  num("f45_ttl_min", s.ttl_min);
  num("f46_ttl_mean", s.ttl_mean);
  num("f47_48_ttl_sd", s.ttl_sd);
  num("f49_delta_max", s.delta_max);
  num("f50_delta_min", s.delta_min);
  num("f51_delta_mean", s.delta_mean);
  num("f52_delta_sd", s.delta_sd);
  num("f53_content_length_total", s.content_length_total);
  num("f54_content_length_max", s.content_length_max);
  num("f55_content_length_min", s.content_length_min);
  num("f56_content_length_median", s.content_length_median);
  num("n_packets", s.n_packets);
  num("n_tcp_total", s.n_tcp_total);
  auto triple = [&](const char* key, const char* side, double& mx, double& mn, double& md) {
    if (!j.contains(key) || !j[key].contains(side)) return;
    const auto& a = j[key][side];
    mx = a.at(0).get<double>();
    mn = a.at(1).get<double>();
    md = a.at(2).get<double>();
  };
  triple("f57_59_cs_bytes", "server", s.server_cs_bytes_max, s.server_cs_bytes_min,
         s.server_cs_bytes_median);
  triple("f57_59_cs_bytes", "client", s.client_cs_bytes_max, s.client_cs_bytes_min,
         s.client_cs_bytes_median);
  triple("f60_62_ext_bytes", "server", s.server_ext_bytes_max, s.server_ext_bytes_min,
         s.server_ext_bytes_median);
  triple("f60_62_ext_bytes", "client", s.client_ext_bytes_max, s.client_ext_bytes_min,
         s.client_ext_bytes_median);
  return s;
}

json to_json(const PairFlow& f) {
  json fq = json::array();
  for (const auto& r : f.fqdns) fq.push_back(to_json(r));
  json urls = json::array();
  for (const auto& u : f.urls) urls.push_back(to_json(u));
  return {
      {"f1_flow_id", {{"cs_id", f.flow_id.cs_id}, {"pf_id", f.flow_id.pf_id}}},
      {"capture", f.pair.capture_name},
      {"f2_source", f.pair.source.to_string()},
      {"f3_destination", f.pair.destination.to_string()},
      {"time_window", {f.time_window.start, f.time_window.end}},
      {"f4_data_points", to_json(f.planes)},
      {"f5_epflag", f.epflag.render()},
      {"f6_12_epflag",
       {{"tcp", f.epflag.contains(Protocol::TCP)},
        {"udp", f.epflag.contains(Protocol::UDP)},
        {"icmp", f.epflag.contains(Protocol::ICMP)},
        {"dns", f.epflag.contains(Protocol::DNS)},
        {"http", f.epflag.contains(Protocol::HTTP)},
        {"tls", f.epflag.contains(Protocol::TLS)},
        {"ssl", f.epflag.contains(Protocol::SSL)}}},
      {"f13_15_fqdns", fq},
      {"f16_urls", urls},
      {"f17_http_servers", f.http_servers},
      {"f18_status_codes", f.status_codes},
      {"f19_content_types", f.content_types},
      {"user_agents", f.user_agents},
      {"f20_29_tls", {{"client", to_json(f.tls.client)}, {"server", to_json(f.tls.server)}}},
      {"f30_62_stats", to_json(f.stats)},
  };
}

PairFlow pairflow_from_json(const json& j) {
  PairFlow f;
  try {
    const auto& id = j.at("f1_flow_id");
    f.flow_id = {id.at("cs_id").get<std::int64_t>(), id.at("pf_id").get<std::int64_t>()};
    f.pair.capture_name = j.at("capture").get<std::string>();
    auto parse_ip = [](const json& v) {
      auto ip = IpAddress::parse(v.get<std::string>());
      if (!ip) throw FormatError("bad address: " + v.dump());
      return *ip;
    };
    f.pair.source = parse_ip(j.at("f2_source"));
    f.pair.destination = parse_ip(j.at("f3_destination"));
    if (j.contains("time_window")) {
      f.time_window = {j["time_window"].at(0).get<double>(), j["time_window"].at(1).get<double>()};
    }
    if (j.contains("f4_data_points")) f.planes = planes_from_json(j["f4_data_points"]);
    if (j.contains("f5_epflag")) f.epflag = ProtocolSet::parse(j["f5_epflag"].get<std::string>());
    if (j.contains("f13_15_fqdns")) {
      for (const auto& r : j["f13_15_fqdns"]) f.fqdns.push_back(fqdn_from_json(r));
    }
    if (j.contains("f16_urls")) {
      for (const auto& u : j["f16_urls"]) f.urls.push_back(url_from_json(u));
    }
    f.http_servers = j.value("f17_http_servers", std::vector<std::string>{});
    f.status_codes = j.value("f18_status_codes", std::vector<std::string>{});
    f.content_types = j.value("f19_content_types", std::vector<std::string>{});
    f.user_agents = j.value("user_agents", std::vector<std::string>{});
    if (j.contains("f20_29_tls")) {
      const auto& t = j["f20_29_tls"];
      f.tls.client = tls_from_json(t.value("client", json::object()), TlsMeta::Role::CLIENT);
      f.tls.server = tls_from_json(t.value("server", json::object()), TlsMeta::Role::SERVER);
    }
    if (j.contains("f30_62_stats")) f.stats = stats_from_json(j["f30_62_stats"]);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed flow record: ") + e.what());
  }
  return f;
}

}  // namespace ctxflow
