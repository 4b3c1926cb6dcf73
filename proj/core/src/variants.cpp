#include "ctxflow/variants.hpp"

#include <algorithm>
#include <fstream>

#include "ctxflow/error.hpp"
#include "ctxflow/pairflow_json.hpp"

namespace ctxflow {

using nlohmann::json;

namespace {

constexpr const char* kPairflowSchema = "ctxflow.pairflow";

json header_line(const std::string& schema, const std::string& config_hash) {
  return {{"schema", schema}, {"version", kVariantSchemaVersion}, {"config_hash", config_hash}};
}

// Identification fields shared by every variant line.
json base_fields(const json& full) {
  json j;
  for (const char* k : {"f1_flow_id", "capture", "f2_source", "f3_destination", "time_window"}) {
    j[k] = full.at(k);
  }
  return j;
}

std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::FQDN: return "fqdn";
    case Variant::PLANES: return "tcp-udp-icmp";
    case Variant::HTTP: return "http";
    case Variant::HTTPS: return "https";
  }
  return "fqdn";
}

std::string variant_file_name(Variant v) {
  return std::string(variant_name(v)) + ".jsonl";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::FQDN, Variant::PLANES, Variant::HTTP, Variant::HTTPS}) {
    if (variant_name(v) == name) return v;
  }
  if (name == "planes") return Variant::PLANES;
  throw UnknownVariant(std::string(name));
}

std::vector<Variant> parse_variant_list(std::string_view csv) {
  std::vector<Variant> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t end = csv.find(',', start);
    if (end == std::string_view::npos) end = csv.size();
    const auto item = csv.substr(start, end - start);
    if (item == "all") {
      out = {Variant::FQDN, Variant::PLANES, Variant::HTTP, Variant::HTTPS};
    } else if (!item.empty()) {
      const Variant v = parse_variant(item);
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    start = end + 1;
  }
  return out;
}

json variant_payload(const PairFlow& flow, Variant v) {
  const json full = to_json(flow);
  json j = base_fields(full);
  switch (v) {
    case Variant::FQDN:
      j["f13_15_fqdns"] = full["f13_15_fqdns"];
      j["f17_http_servers"] = full["f17_http_servers"];
      break;
    case Variant::PLANES: {
      j["f4_data_points"] = full["f4_data_points"];
      j["f5_epflag"] = full["f5_epflag"];
      json stats;
      for (const char* k : {"f44_ttl_max", "f45_ttl_min", "f46_ttl_mean", "f47_48_ttl_sd",
                            "f49_delta_max", "f50_delta_min", "f51_delta_mean",
                            "f52_delta_sd"}) {
        stats[k] = full["f30_62_stats"][k];
      }
      j["f30_62_stats"] = stats;
      break;
    }
    case Variant::HTTP:
      for (const char* k : {"f4_data_points", "f5_epflag", "f6_12_epflag", "f13_15_fqdns",
                            "f16_urls", "f17_http_servers", "f18_status_codes",
                            "f19_content_types", "user_agents", "f30_62_stats"}) {
        j[k] = full[k];
      }
      break;
    case Variant::HTTPS: {
      for (const char* k : {"f4_data_points", "f5_epflag", "f6_12_epflag", "f13_15_fqdns",
                            "f20_29_tls", "f30_62_stats"}) {
        j[k] = full[k];
      }
      // HTTP data points keep their position and size but lose the plaintext
      // details (method, status, content type).
      for (auto& p : j["f4_data_points"]["tcp_data"]) {
        if (p[1] == "HTTP") p[2] = json::array();
      }
      for (const char* k : {"f53_content_length_total", "f54_content_length_max",
                            "f55_content_length_min", "f56_content_length_median"}) {
        j["f30_62_stats"].erase(k);
      }
      break;
    }
  }
  return j;
}

void export_variant(std::span<const PairFlow> flows, Variant v,
                    const std::filesystem::path& out_file, const std::string& config_hash) {
  std::ofstream out = open_out(out_file);
  out << header_line("ctxflow.variant." + std::string(variant_name(v)), config_hash).dump()
      << '\n';
  for (const auto& f : flows) out << variant_payload(f, v).dump() << '\n';
  if (!out) throw DataError("write failed: " + out_file.string());
}

void write_pairflows(std::span<const PairFlow> flows, const std::filesystem::path& out_file,
                     const std::string& config_hash) {
  std::ofstream out = open_out(out_file);
  out << header_line(kPairflowSchema, config_hash).dump() << '\n';
  for (const auto& f : flows) out << to_json(f).dump() << '\n';
  if (!out) throw DataError("write failed: " + out_file.string());
}

std::vector<PairFlow> read_flow_file(const std::filesystem::path& path, FlowFileHeader* header) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path.string());
  std::vector<PairFlow> flows;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (first) {
      first = false;
      if (j.contains("schema")) {
        if (j.value("version", 0) > kVariantSchemaVersion) {
          throw FormatError(path.string() + ": unsupported schema version");
        }
        if (header) {
          header->schema = j.value("schema", "");
          header->version = j.value("version", 0);
          header->config_hash = j.value("config_hash", "");
        }
        continue;
      }
    }
    flows.push_back(pairflow_from_json(j));
  }
  return flows;
}

}  // namespace ctxflow
