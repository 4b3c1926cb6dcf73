#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxflow/pairflow.hpp"

namespace ctxflow {

enum class Variant : std::uint8_t { FQDN, PLANES, HTTP, HTTPS };

inline constexpr int kVariantSchemaVersion = 1;

std::string_view variant_name(Variant v);       // "fqdn", "tcp-udp-icmp", ...
std::string variant_file_name(Variant v);       // "fqdn.jsonl", ...
Variant parse_variant(std::string_view name);   // throws UnknownVariant
std::vector<Variant> parse_variant_list(std::string_view csv);

// Projection of one flow. Every value is copied from the flow record.
nlohmann::json variant_payload(const PairFlow& flow, Variant v);

// One schema header line, then one JSON object per flow.
void export_variant(std::span<const PairFlow> flows, Variant v,
                    const std::filesystem::path& out_file,
                    const std::string& config_hash = {});

// Full-record interchange file ("pairflows.jsonl"), same header convention.
void write_pairflows(std::span<const PairFlow> flows,
                     const std::filesystem::path& out_file,
                     const std::string& config_hash = {});

struct FlowFileHeader {
  std::string schema;
  int version = 0;
  std::string config_hash;
};

// Reads pairflows.jsonl or any variant file back into flows (the HTTP
// variant carries everything feature extraction needs).
std::vector<PairFlow> read_flow_file(const std::filesystem::path& path,
                                     FlowFileHeader* header = nullptr);

}  // namespace ctxflow
