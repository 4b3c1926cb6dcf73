#include "corpus.hpp"

#include <atomic>
#include <cmath>
#include <set>
#include <tuple>
#include <chrono>
#include <mutex>
#include <random>

namespace testsupport {

using namespace ctxflow;
namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::unique_ptr<CompiledCorpus> build_corpus(const fs::path& dir, std::uint64_t seed,
                                             const CorpusOptions& opt,
                                             const PipelineConfig& cfg) {
  auto c = std::make_unique<CompiledCorpus>();
  c->dir = dir;
  c->cfg = cfg;
  c->ledger = generate_corpus(default_corpus(seed, opt), dir, cfg.threads);
  c->labels = load_capture_labels(dir / "labels.csv");
  const auto inputs = list_captures(dir, c->labels);
  const DomainAges ages = load_domain_ages(dir / "domain_ages.txt");
  c->compiled = compile_captures(inputs, cfg, c->registry, &ages);
  c->featurized = featurize_flows(c->compiled.flows, cfg, c->registry, c->labels);
  return c;
}

std::vector<std::string> ledger_mismatches(const PlantLedger& ledger, const CompileResult& compiled,
                                           double window_seconds) {
  using Key = std::tuple<std::string, std::string, std::string, std::int64_t>;
  std::map<Key, const PairFlow*> flows;
  for (const auto& f : compiled.flows) {
    const Key k{f.pair.capture_name, f.pair.source.to_string(), f.pair.destination.to_string(),
                window_index_of(f.time_window.start, window_seconds)};
    flows[k] = &f;
  }
  std::vector<std::string> bad;
  std::size_t matched = 0;
  auto near = [](double a, double b) { return std::fabs(a - b) <= 1e-5; };
  for (const auto& pf : ledger.flows) {
    const Key k{pf.capture, pf.source, pf.destination, pf.window};
    const std::string where = pf.capture + "|" + pf.source + "|" + pf.destination + "|w" +
                              std::to_string(pf.window) + ": ";
    auto it = flows.find(k);
    if (pf.expect != "kept") {
      if (it != flows.end()) bad.push_back(where + "planted as " + pf.expect + " but kept");
      continue;
    }
    if (it == flows.end()) {
      bad.push_back(where + "missing from the compiled flows");
      continue;
    }
    ++matched;
    const PairFlow& f = *it->second;
    const InitialStats& s = f.stats;
    auto check = [&](bool ok, const std::string& what) {
      if (!ok) bad.push_back(where + what);
    };
    check(s.n_packets == pf.packets, "packet count");
    check(s.total_sent == pf.bytes_sent, "bytes sent");
    check(s.total_received == pf.bytes_received, "bytes received");
    check(s.n_raw_tcp == pf.n_raw_tcp, "raw TCP count");
    check(near(static_cast<double>(s.n_raw_tcp) / static_cast<double>(s.n_packets), pf.raw_tcp_ratio()),
          "raw TCP ratio");
    check(static_cast<std::int64_t>(f.planes.tcp_data.size()) == pf.n_data_packets, "data packets");
    check(count_dns_requests(f.planes) == pf.dns_requests, "DNS requests");
    check(count_fin_ack(f.planes) == pf.fin_ack, "FIN-ACK count");
    check(f.ip_only() == pf.ip_only, "IP-only flag");
    const auto idle = idle_time_features(f.planes.tcp_data);
    check(near(idle.max, pf.idle_max) && near(idle.min, pf.idle_min), "idle max/min");
    check(near(s.delta_mean, pf.delta_mean), "delta mean");
    std::set<std::string> urls;
    for (const auto& u : f.urls) urls.insert(u.url);
    check(std::vector<std::string>(urls.begin(), urls.end()) == pf.urls, "URL set");
  }
  if (matched != compiled.flows.size()) {
    bad.push_back(std::to_string(compiled.flows.size() - matched) + " compiled flows have no ledger row");
  }
  return bad;
}

const CompiledCorpus& small_corpus() {
  static std::once_flag once;
  static std::unique_ptr<TempDir> dir;
  static std::unique_ptr<CompiledCorpus> corpus;
  std::call_once(once, [] {
    dir = std::make_unique<TempDir>("ctxflow-small");
    CorpusOptions opt;
    opt.n_apt = 5;
    opt.n_botnet = 4;
    opt.n_legitimate = 5;
    corpus = build_corpus(dir->path(), 11, opt);
  });
  return *corpus;
}

}  // namespace testsupport
