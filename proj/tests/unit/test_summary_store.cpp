#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_int.hpp>
#include <fstream>
#include <random>
#include <sstream>

#include "corpus.hpp"
#include "ctxflow/error.hpp"
#include "ctxflow/summary_store.hpp"
#include "oracles.hpp"
#include "packets.hpp"

using namespace ctxflow;
using namespace testsupport;
using Rational = boost::multiprecision::cpp_rational;

namespace {

const IpAddress kA = ip("10.0.0.1");
const IpAddress kB = ip("198.51.100.9");

PairFlow window_flow(SummaryRegistry& reg, const PairKey& key, int w, std::uint8_t flags_seed) {
  Trace t;
  if (flags_seed & 1) t.add(dns_req(key.source, ip("10.0.0.53"), 1, "x.com"), w * 600 + 1);
  if (flags_seed & 2) t.add(tcp(key.source, key.destination, 1, 2, tcp_flag::kAck, 40), w * 600 + 2);
  if (flags_seed & 4) t.add(http_get(key.source, key.destination, "x.com", "/"), w * 600 + 3);
  if (t.packets().empty()) t.add(tcp(key.source, key.destination, 1, 2, tcp_flag::kSyn), w * 600 + 4);
  return encapsulate(reg.assign_flow_id(key), key, t.packets(), {w * 600.0, (w + 1) * 600.0});
}

FeatureVector random_vector(std::mt19937_64& rng) {
  FeatureVector v;
  for (int id = 1; id <= 102; ++id) {
    const bool present = rng() % 5 != 0;
    v.set(id, present ? std::uniform_real_distribution<double>(0, 1e4)(rng) : 0, present);
  }
  return v;
}

}  // namespace

// The weighted-average fold equals the plain mean, checked in exact rational
// arithmetic; the floating-point rule stays within 1e-12 of it, relative to
// the largest input.
TEST(UpdateRules, FoldEqualsMean) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<double> xs(n);
    for (auto& x : xs) {
      x = trial % 2 ? static_cast<double>(rng() % 100000)
                    : std::uniform_real_distribution<double>(-1e6, 1e6)(rng);
    }
    Rational exact_fold(xs[0]), sum(0);
    double fold = xs[0], scale = 1;
    for (std::size_t i = 0; i < n; ++i) {
      sum += Rational(xs[i]);
      scale = std::max(scale, std::abs(xs[i]));
      if (i == 0) continue;
      exact_fold = (exact_fold * Rational(static_cast<long long>(i)) + Rational(xs[i])) /
                   Rational(static_cast<long long>(i + 1));
      fold = update_numeric(fold, static_cast<std::int64_t>(i), xs[i]);
    }
    const Rational mean = sum / Rational(static_cast<long long>(n));
    ASSERT_EQ(exact_fold, mean);
    // Rounding error scales with the inputs, not with a mean that may cancel.
    ASSERT_LE(std::abs(fold - static_cast<double>(mean)), 1e-12 * scale);
  }
}

TEST(UpdateRules, FlagFoldIsUnion) {
  std::mt19937_64 rng(102);
  for (int trial = 0; trial < 10000; ++trial) {
    ProtocolSet acc;
    std::uint8_t want = 0;
    for (int i = 0, n = 1 + static_cast<int>(rng() % 10); i < n; ++i) {
      const auto bits = static_cast<std::uint8_t>(rng() & 0x7f);
      acc = update_flags(acc, ProtocolSet::from_bits(bits));
      want |= bits;
    }
    ASSERT_EQ(acc.bits(), want);
  }
}

TEST(UpdateRules, UaStoreRecount) {
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 10000; ++trial) {
    std::set<std::string> store;
    std::vector<std::string> all;
    for (int i = 0, n = 1 + static_cast<int>(rng() % 6); i < n; ++i) {
      std::vector<std::string> batch;
      for (int j = 0, m = static_cast<int>(rng() % 4); j < m; ++j) batch.push_back("ua" + std::to_string(rng() % 9));
      update_ua_store(store, batch);
      all.insert(all.end(), batch.begin(), batch.end());
    }
    ASSERT_EQ(store, std::set<std::string>(all.begin(), all.end()));
  }
}

// A 5-window history of one pair equals a fold-left replay of the rules.
TEST(Registry, FiveWindowReplay) {
  std::mt19937_64 rng(104);
  for (int trial = 0; trial < 200; ++trial) {
    SummaryRegistry reg;
    const PairKey key{"cap", kA, kB};
    FeatureVector want;
    ProtocolSet flags;
    std::set<std::string> uas;
    std::int64_t last_interval = -1;
    for (int w = 0; w < 5; ++w) {
      const PairFlow f = window_flow(reg, key, w, static_cast<std::uint8_t>(rng() % 8));
      FeatureVector v = random_vector(rng);
      const std::vector<std::string> host_uas = {"ua" + std::to_string(rng() % 3)};
      const std::int64_t interval = (w * 600) / 900;
      const ContextualSummary& s = reg.upsert(v, f, host_uas, interval);

      if (w == 0) {
        want = v;
      } else {
        for (int id = 1; id <= kLastFlowSlot; ++id) {
          want.set(id, update_numeric(want.at(id), w, v.at(id)), want.has(id) || v.has(id));
        }
        if (interval != last_interval) {
          for (int id = kLastFlowSlot + 1; id <= 102; ++id) want.set(id, v.at(id), v.has(id));
        }
      }
      last_interval = interval;
      flags = update_flags(flags, f.epflag);
      uas.insert(host_uas.begin(), host_uas.end());
      want.set(59, static_cast<double>(uas.size()));

      EXPECT_EQ(s.last_pf_id, w);
      EXPECT_EQ(s.last_flow_pf_id, f.flow_id.pf_id);
      EXPECT_EQ(s.epflag_union, flags);
      EXPECT_EQ(s.ua_store, uas);
      for (int id = 1; id <= 102; ++id) {
        ASSERT_EQ(s.features.at(id), want.at(id)) << "slot " << id;
        ASSERT_EQ(s.features.has(id), want.has(id)) << "slot " << id;
      }
    }
    EXPECT_EQ(reg.find(key)->window_span.start, 0);
    EXPECT_EQ(reg.find(key)->window_span.end, 3000);
  }
}

TEST(Registry, SnapshotAndLogRoundTrip) {
  TempDir tmp;
  SummaryRegistry reg;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 6; ++i) {
    const PairKey key{"cap", IpAddress::v4(0x0a000001u + static_cast<std::uint32_t>(i % 3)), kB};
    const PairFlow f = window_flow(reg, key, i / 3, 7);
    reg.upsert(random_vector(rng), f, std::vector<std::string>{"ua"}, 0);
    reg.set_label(f.flow_id.cs_id, ClassLabel::APT);
  }
  reg.blacklist_ip(kB, {1, 12.5});
  reg.blacklist_fqdn("evil.com", {2, 13});
  reg.persist(tmp.path());
  EXPECT_EQ(reg.pending_events(), 0u);

  SummaryRegistry replayed = SummaryRegistry::open(tmp.path());
  EXPECT_EQ(replayed.snapshot_json(), reg.snapshot_json());

  replayed.compact(tmp.path());
  EXPECT_EQ(std::filesystem::file_size(tmp / SummaryRegistry::kLogFile), 0u);
  SummaryRegistry compacted = SummaryRegistry::open(tmp.path());
  EXPECT_EQ(compacted.snapshot_json(), reg.snapshot_json());

  // cs_ids keep counting after reopen.
  const FlowId next = compacted.assign_flow_id(PairKey{"cap", ip("10.9.9.9"), kB});
  EXPECT_EQ(next.cs_id, reg.directory().next_cs_id());
  const FlowId again = compacted.assign_flow_id(PairKey{"cap", kA, kB});
  EXPECT_EQ(again.pf_id, reg.directory().find(PairKey{"cap", kA, kB})->last_pf_id + 1);
}

TEST(Registry, TornLogTailIsIgnored) {
  TempDir tmp;
  SummaryRegistry reg;
  reg.assign_flow_id(PairKey{"cap", kA, kB});
  reg.persist(tmp.path());
  {
    std::ofstream(tmp / SummaryRegistry::kLogFile, std::ios::app) << "{\"op\":\"assi";
  }
  const SummaryRegistry back = SummaryRegistry::open(tmp.path());
  EXPECT_EQ(back.directory().size(), 1u);
}

TEST(Registry, SummaryJsonRoundTrip) {
  const auto& c = small_corpus();
  for (const auto& [id, s] : c.registry.summaries()) {
    ASSERT_EQ(summary_from_json(to_json(s)), s);
  }
}

TEST(Registry, RecomputeEqualsRecount) {
  // Each summary's pf counter and UA store match a recount over its flows.
  const auto& c = small_corpus();
  std::map<std::int64_t, std::int64_t> n;
  for (const auto& f : c.compiled.flows) ++n[f.flow_id.cs_id];
  for (const auto& [id, s] : c.registry.summaries()) {
    EXPECT_EQ(s.last_pf_id + 1, n[id]);
    EXPECT_EQ(s.features.at(59), static_cast<double>(s.ua_store.size()));
  }
}

TEST(Blacklist, TextImportExport) {
  Blacklist bl;
  std::istringstream in("# header\nip:1.2.3.4\nfqdn:evil.com  # c2\n\nip:1.2.3.4\n");
  EXPECT_EQ(bl.import_text(in), 2u);
  std::ostringstream out;
  bl.export_text(out);
  EXPECT_EQ(out.str(), "ip:1.2.3.4\nfqdn:evil.com\n");
  Blacklist back;
  std::istringstream again(out.str());
  back.import_text(again);
  EXPECT_EQ(back.ips, bl.ips);
  EXPECT_EQ(back.fqdns, bl.fqdns);

  std::istringstream bad("host:nope\n");
  EXPECT_THROW(bl.import_text(bad), FormatError);
  std::istringstream bad_ip("ip:999.1.1.1\n");
  EXPECT_THROW(bl.import_text(bad_ip), FormatError);
}

TEST(Blacklist, CheckByIpOrFqdn) {
  Trace t;
  t.add(http_get(kA, kB, "Evil.com", "/"), 1);
  const PairFlow f = encapsulate(FlowId{}, PairKey{"c", kA, kB}, t.packets(), {0, 600});
  Blacklist bl;
  EXPECT_EQ(blacklist_check(f, bl), Verdict::PASS);
  bl.add_fqdn("evil.com");
  EXPECT_EQ(blacklist_check(f, bl), Verdict::BLOCKED);
  Blacklist by_ip;
  by_ip.add_ip(kB);
  EXPECT_EQ(blacklist_check(f, by_ip), Verdict::BLOCKED);
}
