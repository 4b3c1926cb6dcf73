#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "corpus.hpp"
#include "ctxflow/error.hpp"
#include "ctxflow/features.hpp"
#include "oracles.hpp"
#include "packets.hpp"

using namespace ctxflow;
using namespace testsupport;

namespace {

PlanePoint pt(double ts, std::uint32_t len) {
  PlanePoint p;
  p.tag = "TCP";
  p.timestamp = ts;
  p.length = len;
  return p;
}

HostProfile host_with_starts(std::vector<double> starts) {
  HostProfile h;
  h.connection_start_times = std::move(starts);
  return h;
}

}  // namespace

TEST(Sma, WorkedBucketExample) {
  const std::vector<PlanePoint> pts = {pt(5.2, 128), pt(5.9, 32)};
  const SmaSeries s = build_sma(pts, 1.0, 60);
  ASSERT_EQ(s.points.size(), 1u);
  EXPECT_EQ(s.points[0].first, 6);
  EXPECT_EQ(s.points[0].second, 160);
}

TEST(Sma, ConstantSeries) {
  std::vector<PlanePoint> pts;
  for (int i = 0; i < 30; ++i) pts.push_back(pt(i + 0.5, 100));
  for (int k : {1, 3, 7, 60}) {
    const SmaSeries s = build_sma(pts, 1.0, k);
    for (double v : s.sma_values) EXPECT_EQ(v, 100);
    const SmaFeatures f = sma_features(s);
    EXPECT_EQ(f.n_outliers, 0);
    EXPECT_EQ(f.n_above, 0);
    EXPECT_EQ(f.n_below, 0);
  }
}

TEST(Sma, SingleSpike) {
  std::vector<PlanePoint> pts;
  for (int i = 0; i < 20; ++i) pts.push_back(pt(i + 0.5, i == 10 ? 1000 : 100));
  const SmaSeries s = build_sma(pts, 1.0, 5);
  const SmaFeatures f = sma_features(s);
  EXPECT_EQ(f.n_outliers, 1);
  EXPECT_DOUBLE_EQ(f.magnitude_mean, 1000 - s.sma_values[10]);
  EXPECT_EQ(f.magnitude_sd, 0);
}

TEST(Sma, GapsAreZeroFilled) {
  const SmaSeries s = build_sma(std::vector<PlanePoint>{pt(0.5, 10), pt(4.5, 10)}, 1.0, 10);
  ASSERT_EQ(s.points.size(), 5u);
  EXPECT_EQ(s.points[2].second, 0);
}

TEST(Sma, RejectsBadParameters) {
  EXPECT_THROW(build_sma({}, 0, 1), ConfigError);
  EXPECT_THROW(build_sma({}, 1, 0), ConfigError);
  EXPECT_FALSE(build_sma({}, 1, 1).present);
}

// Trailing means and the ten SMA features against direct summation.
TEST(Sma, RandomSeriesMatchOracle) {
  std::mt19937_64 rng(77);
  const double rates[] = {1, 0.5, 0.25, 2, 5};
  for (int trial = 0; trial < 1000; ++trial) {
    const auto pts = random_data_plane(rng, 1 + rng() % 120, 1 + static_cast<double>(rng() % 300));
    const double rate = rates[rng() % 5];
    const int k = trial % 3 == 0 ? 7 : 1 + static_cast<int>(rng() % 40);
    const SmaSeries s = build_sma(pts, rate, k);
    const RefSma ref = ref_sma(pts, rate, k);
    ASSERT_EQ(s.points.size(), ref.sums.size());
    for (std::size_t i = 0; i < ref.sums.size(); ++i) {
      ASSERT_EQ(s.points[i].first, ref.buckets[i]);
      ASSERT_EQ(s.points[i].second, static_cast<double>(ref.sums[i]));
      ASSERT_TRUE(close_rel(s.sma_values[i], static_cast<double>(ref.sma[i])));
    }
    const SmaFeatures f = sma_features(s);
    const RefSmaFeatures rf = ref_sma_features(ref);
    EXPECT_EQ(f.n_below, static_cast<double>(rf.n_below));
    EXPECT_EQ(f.n_above, static_cast<double>(rf.n_above));
    EXPECT_EQ(f.n_outliers, static_cast<double>(rf.n_outliers));
    EXPECT_TRUE(close_rel(f.ratio_below, static_cast<double>(rf.ratio_below)));
    EXPECT_TRUE(close_rel(f.ratio_above, static_cast<double>(rf.ratio_above)));
    EXPECT_TRUE(close_rel(f.ratio_outliers, static_cast<double>(rf.ratio_outliers)));
    EXPECT_EQ(f.magnitude_present, rf.magnitude.present);
    EXPECT_TRUE(close_rel(f.magnitude_max, static_cast<double>(rf.magnitude.max)));
    EXPECT_TRUE(close_rel(f.magnitude_min, static_cast<double>(rf.magnitude.min)));
    EXPECT_TRUE(close_rel(f.magnitude_mean, static_cast<double>(rf.magnitude.mean)));
    EXPECT_TRUE(close_rel(f.magnitude_sd, static_cast<double>(rf.magnitude.sd)));
  }
}

TEST(Idle, Examples) {
  const auto t = idle_time_features(std::vector<PlanePoint>{pt(0, 1), pt(10, 1), pt(40, 1)});
  EXPECT_EQ(t.max, 30);
  EXPECT_EQ(t.min, 10);
  EXPECT_EQ(t.mean, 20);
  const auto one = idle_time_features(std::vector<PlanePoint>{pt(3, 1)});
  EXPECT_FALSE(one.present);
  EXPECT_EQ(one.max + one.min + one.mean, 0);
}

TEST(Mtdsc, Examples) {
  EXPECT_EQ(mtdsc(host_with_starts({0, 10})).mean, 10);
  const auto t = mtdsc(host_with_starts({40, 0, 10}));
  EXPECT_EQ(t.max, 30);
  EXPECT_EQ(t.min, 10);
  EXPECT_EQ(t.mean, 20);
  EXPECT_FALSE(mtdsc(host_with_starts({5})).present);
}

TEST(Mtdsc, RandomStartsMatchOracle) {
  std::mt19937_64 rng(50);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> starts(trial == 0 ? 50 : 2 + rng() % 60);
    for (auto& s : starts) s = std::uniform_real_distribution<double>(0, 900)(rng);
    if (trial % 10 == 0) starts.push_back(starts[0]);  // duplicate start
    const auto got = mtdsc(host_with_starts(starts));
    const auto want = ref_stats(ref_consecutive_gaps(starts));
    EXPECT_TRUE(close_rel(got.max, static_cast<double>(want.max)));
    EXPECT_TRUE(close_rel(got.min, static_cast<double>(want.min)));
    EXPECT_TRUE(close_rel(got.mean, static_cast<double>(want.mean)));
  }
}

// Slots 1-50 of random flows against the plane-recount oracle.
TEST(FlowFeatures, RandomFlowsMatchOracle) {
  std::mt19937_64 rng(31);
  const auto flows = random_flows(rng, 1000);
  for (const auto& f : flows) {
    FeatureVector v;
    flow_features(f, FeatureConfig{1.0, 60}, v);
    const auto diff = compare_slots(v, ref_flow_slots(f, 1.0, 60), 1, 50);
    ASSERT_FALSE(diff) << *diff;
  }
}

TEST(FlowFeatures, RatioExamples) {
  const IpAddress a = ip("10.0.0.1"), b = ip("1.1.1.1");
  Trace t;
  for (int i = 0; i < 8; ++i) t.add(tcp(a, b, 1, 2, tcp_flag::kAck, 10), i);
  t.add(http_get(a, b, "x.com", "/"), 8);
  t.add(http_reply(b, a, 404, "text/html", 5), 9);
  const PairFlow f = encapsulate(FlowId{}, PairKey{"c", a, b}, t.packets(), {0, 600});
  FeatureVector v;
  flow_features(f, {}, v);
  EXPECT_DOUBLE_EQ(v.at(3), 0.8);

  Trace r;
  r.add(http_reply(b, a, 200, "", 0), 1).add(http_reply(b, a, 200, "", 0), 2).add(http_reply(b, a, 404, "", 0), 3);
  const PairFlow g = encapsulate(FlowId{}, PairKey{"c", a, b}, r.packets(), {0, 600});
  FeatureVector w;
  flow_features(g, {}, w);
  EXPECT_DOUBLE_EQ(w.at(10), 2.0 / 3);
  EXPECT_DOUBLE_EQ(w.at(12), 1.0 / 3);
}

// Slots 51-102 against a group-by recount over every flow of the interval.
TEST(ProfileFeatures, RandomIntervalsMatchOracle) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 25; ++trial) {
    const auto flows = random_flows(rng, 40);
    const ProfileSet ps = pivot_profiles(flows);
    const FeatureExtractor ex(ps, {});
    for (const auto& f : flows) {
      const FeatureVector v = ex.extract(f);
      const auto diff = compare_slots(v, ref_profile_slots(flows, f), 51, 102);
      ASSERT_FALSE(diff) << *diff;
    }
  }
}

TEST(ProfileFeatures, CorpusMatchesOracle) {
  const auto& c = small_corpus();
  std::map<std::int64_t, std::vector<PairFlow>> by_interval;
  for (const auto& f : c.compiled.flows) {
    by_interval[profile_interval(f, c.cfg.recompute_seconds)].push_back(f);
  }
  for (std::size_t i = 0; i < c.compiled.flows.size(); ++i) {
    const auto& f = c.compiled.flows[i];
    const auto& interval = by_interval[profile_interval(f, c.cfg.recompute_seconds)];
    const auto& v = c.featurized.flow_vectors[i];
    auto diff = compare_slots(v, ref_profile_slots(interval, f), 51, 102);
    ASSERT_FALSE(diff) << f.pair.to_string() << ": " << *diff;
    diff = compare_slots(v, ref_flow_slots(f, c.cfg.sma_rate, c.cfg.sma_k), 1, 50);
    ASSERT_FALSE(diff) << f.pair.to_string() << ": " << *diff;
  }
}

TEST(HostFeatures, IpOnlyRatioAndUas) {
  HostProfile h;
  h.ip_only_connections = 1;
  h.fqdn_connections = 2;
  h.ua_strings = {"ua1", "ua1", "ua2"};
  h.flows.resize(3);
  FeatureVector v;
  host_features(h, UaIndex{}, v);
  EXPECT_DOUBLE_EQ(v.at(54), 0.5);
  EXPECT_EQ(v.at(59), 2);
  EXPECT_DOUBLE_EQ(v.at(63), 2.0 / 3);
}

TEST(DestinationFeatures, Examples) {
  DestinationProfile d;
  d.connected_hosts = {{"c", ip("10.0.0.1")}, {"c", ip("10.0.0.2")}};
  d.packet_failures = {0, 1, 5};
  FeatureVector v;
  destination_features(d, v);
  EXPECT_EQ(v.at(64), 2);
  EXPECT_EQ(v.at(73), 5);
  EXPECT_EQ(v.at(74), 0);
  EXPECT_EQ(v.at(75), 2);
}

TEST(UrlFeatures, Example) {
  URLProfile p;
  const PairFlow f = [] {
    Trace t;
    t.add(http_get(ip("10.0.0.1"), ip("1.1.1.1"), "a.com", "/a/b/c.exe?x=1"), 1);
    return encapsulate(FlowId{}, PairKey{"c", ip("10.0.0.1"), ip("1.1.1.1")}, t.packets(), {0, 600});
  }();
  const ProfileSet ps = pivot_profiles(std::vector<PairFlow>{f});
  FeatureVector v;
  url_features(ps.urls.at("a.com"), v);
  EXPECT_EQ(v.at(88), 2);  // depth
  EXPECT_EQ(v.at(82), 1);
  EXPECT_EQ(v.at(83), 1);
  EXPECT_EQ(v.at(91), 1);  // params
}

TEST(Mask, ActiveCounts) {
  EXPECT_EQ(mode_mask(Mode::HTTP).count(), 98u);
  EXPECT_EQ(mode_mask(Mode::HTTPS).count(), 51u);
  for (int id = 42; id <= 45; ++id) EXPECT_FALSE(mode_mask(Mode::HTTP)[id - 1]);
  for (int id = 82; id <= 102; ++id) EXPECT_FALSE(mode_mask(Mode::HTTPS)[id - 1]);
  for (int id : {59, 60, 61, 62, 63, 72, 73, 74, 75}) EXPECT_FALSE(mode_mask(Mode::HTTPS)[id - 1]);
  const auto table = mask_table_json();
  EXPECT_EQ(table["active_http"], 98);
  EXPECT_EQ(table["slots"].size(), 102u);
}

TEST(Mask, IdempotentProjection) {
  const auto& vs = small_corpus().featurized.flow_vectors;
  const FeatureBits shared = mode_mask(Mode::HTTPS);
  for (const auto& v : vs) {
    const FeatureVector https = apply_mode_mask(v, Mode::HTTPS);
    EXPECT_EQ(apply_mode_mask(https, Mode::HTTPS), https);
    const FeatureVector http = apply_mode_mask(v, Mode::HTTP);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      if (!shared[i]) {
        EXPECT_EQ(https.values[i], 0);
        EXPECT_FALSE(https.present[i]);
        continue;
      }
      // Bit-exact agreement on shared slots.
      EXPECT_EQ(std::memcmp(&https.values[i], &http.values[i], sizeof(double)), 0);
      EXPECT_EQ(https.present[i], http.present[i]);
    }
  }
}

TEST(Ranges, RatiosBoundedCountsNonNegative) {
  const auto& vs = small_corpus().featurized.flow_vectors;
  for (const auto& v : vs) {
    double proto_sum = 0;
    for (int id = 3; id <= 9; ++id) proto_sum += v.at(id);
    EXPECT_LE(proto_sum, 1 + 1e-12);
    for (const auto& s : slot_table()) {
      const double x = v.at(s.id);
      EXPECT_FALSE(std::isnan(x));
      if (s.kind == SlotKind::Ratio) {
        EXPECT_GE(x, 0) << s.name;
        EXPECT_LE(x, 1) << s.name;
      }
      if (s.kind == SlotKind::Count || s.kind == SlotKind::Bytes) { EXPECT_GE(x, 0) << s.name; }
      if (s.kind == SlotKind::Ttl) {
        EXPECT_EQ(x, 0);
        EXPECT_FALSE(v.has(s.id));
      }
    }
  }
}

TEST(Ranges, ProtocolFractionsSumToTcpFraction) {
  for (const auto& f : small_corpus().compiled.flows) {
    const auto& s = f.stats;
    const double n = static_cast<double>(s.n_packets);
    EXPECT_NEAR((s.n_raw_tcp + s.n_http + s.n_tls + s.n_ssl) / n, s.n_tcp_total / n, 1e-12);
  }
}
