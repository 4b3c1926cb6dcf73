#include <gtest/gtest.h>

#include <fstream>

#include "corpus.hpp"
#include "ctxflow/error.hpp"
#include "ctxflow/pairflow_json.hpp"
#include "ctxflow/variants.hpp"
#include "packets.hpp"

using namespace ctxflow;
using namespace testsupport;
using nlohmann::json;

namespace {

std::vector<json> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

// Every key of `projected` equals the full record's value; nested objects
// may be subsets.
void expect_subset(const json& projected, const json& full, const std::string& path) {
  ASSERT_TRUE(projected.is_object()) << path;
  for (const auto& [k, v] : projected.items()) {
    ASSERT_TRUE(full.contains(k)) << path << "." << k;
    if (v.is_object() && full[k].is_object()) {
      expect_subset(v, full[k], path + "." + k);
    } else {
      EXPECT_EQ(v, full[k]) << path << "." << k;
    }
  }
}

}  // namespace

TEST(Variants, Names) {
  EXPECT_EQ(variant_file_name(Variant::PLANES), "tcp-udp-icmp.jsonl");
  EXPECT_EQ(parse_variant("https"), Variant::HTTPS);
  EXPECT_THROW(parse_variant("smtp"), UnknownVariant);
  EXPECT_EQ(parse_variant_list("all").size(), 4u);
  EXPECT_EQ(parse_variant_list("http,http,fqdn").size(), 2u);
}

TEST(Variants, ProjectionFidelityOverCorpus) {
  const auto& c = small_corpus();
  const auto& flows = c.compiled.flows;
  TempDir tmp;
  for (Variant v : {Variant::FQDN, Variant::PLANES, Variant::HTTP, Variant::HTTPS}) {
    const auto file = tmp / variant_file_name(v);
    export_variant(flows, v, file, "abc");
    const auto lines = read_lines(file);
    ASSERT_EQ(lines.size(), flows.size() + 1);
    EXPECT_EQ(lines[0]["config_hash"], "abc");
    for (std::size_t i = 0; i < flows.size(); ++i) {
      const json full = to_json(flows[i]);
      json line = lines[i + 1];
      if (v == Variant::HTTPS) {
        // Opacity: nothing plaintext survives.
        for (const char* k : {"f16_urls", "user_agents", "f18_status_codes", "f19_content_types"}) {
          EXPECT_FALSE(line.contains(k)) << k;
        }
        const json& got = line["f4_data_points"];
        const json& want = full["f4_data_points"];
        for (const auto& [plane, pts] : want.items()) {
          ASSERT_EQ(got[plane].size(), pts.size());
          for (std::size_t k = 0; k < pts.size(); ++k) {
            for (std::size_t e = 0; e < pts[k].size(); ++e) {
              if (got[plane][k][1] == "HTTP" && e == 2) {
                EXPECT_TRUE(got[plane][k][e].empty());
              } else {
                EXPECT_EQ(got[plane][k][e], pts[k][e]);
              }
            }
          }
        }
        line.erase("f4_data_points");
      }
      expect_subset(line, full, variant_file_name(v));
    }
  }
}

TEST(Variants, PairflowFileRoundTrip) {
  const auto& flows = small_corpus().compiled.flows;
  TempDir tmp;
  write_pairflows(flows, tmp / "pairflows.jsonl", "h1");
  FlowFileHeader h;
  const auto back = read_flow_file(tmp / "pairflows.jsonl", &h);
  EXPECT_EQ(h.config_hash, "h1");
  ASSERT_EQ(back.size(), flows.size());
  for (std::size_t i = 0; i < flows.size(); ++i) ASSERT_EQ(back[i], flows[i]) << i;
}

TEST(Variants, FlowAppearsInHttpAndHttps) {
  const IpAddress a = ip("10.0.0.1"), b = ip("203.0.113.5");
  Trace t;
  t.add(http_get(a, b, "mixed.com", "/x"), 1);
  FrameSpec hello = tcp(a, b, 40001, 443, tcp_flag::kPsh | tcp_flag::kAck);
  hello.payload = wire::tls_client_hello(wire::HelloSpec{});
  t.add(hello, 2);
  const PairFlow f = encapsulate(FlowId{3, 1}, PairKey{"cap", a, b}, t.packets(), {0, 600});
  ASSERT_TRUE(f.epflag.contains(Protocol::HTTP) && f.epflag.contains(Protocol::TLS));
  const json http = variant_payload(f, Variant::HTTP);
  const json https = variant_payload(f, Variant::HTTPS);
  EXPECT_EQ(http["f1_flow_id"], https["f1_flow_id"]);
  EXPECT_EQ(http["f4_data_points"]["tcp_data"].size(), https["f4_data_points"]["tcp_data"].size());
  EXPECT_TRUE(http.contains("f16_urls"));
  EXPECT_FALSE(https.contains("f16_urls"));
  EXPECT_TRUE(https.contains("f20_29_tls"));
}

TEST(Variants, MalformedLineIsFormatError) {
  TempDir tmp;
  std::ofstream(tmp / "bad.jsonl") << "{\"schema\":\"x\",\"version\":1}\n{not json\n";
  EXPECT_THROW(read_flow_file(tmp / "bad.jsonl"), FormatError);
}
