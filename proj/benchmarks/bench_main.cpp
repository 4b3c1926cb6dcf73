#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "ctxflow/features.hpp"
#include "ctxflow/forest.hpp"
#include "ctxflow/pipeline.hpp"
#include "ctxflow/synth.hpp"

using namespace ctxflow;
namespace fs = std::filesystem;

namespace {

std::vector<PlanePoint> data_plane(std::size_t n, double span) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ts(0, span);
  std::uniform_int_distribution<std::uint32_t> len(60, 1500);
  std::vector<PlanePoint> pts(n);
  for (auto& p : pts) {
    p.tag = "TCP";
    p.timestamp = ts(rng);
    p.length = len(rng);
  }
  std::sort(pts.begin(), pts.end(),
            [](const PlanePoint& a, const PlanePoint& b) { return a.timestamp < b.timestamp; });
  return pts;
}

// A small generated corpus shared by the pipeline benchmarks.
struct Corpus {
  fs::path dir;
  std::map<std::string, ClassLabel> labels;
  std::vector<CaptureInput> inputs;
  std::size_t packets = 0;

  Corpus() {
    dir = fs::temp_directory_path() / "ctxflow-bench-corpus";
    fs::remove_all(dir);
    CorpusOptions opt;
    opt.n_apt = 6;
    opt.n_botnet = 6;
    opt.n_legitimate = 8;
    const auto ledger = generate_corpus(default_corpus(3, opt), dir);
    for (const auto& c : ledger.captures) packets += c.packets;
    labels = load_capture_labels(dir / "labels.csv");
    inputs = list_captures(dir, labels);
  }
  ~Corpus() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

Corpus& corpus() {
  static Corpus c;
  return c;
}

}  // namespace

static void BM_BuildSma(benchmark::State& state) {
  const auto pts = data_plane(static_cast<std::size_t>(state.range(0)), 600);
  for (auto _ : state) {
    auto s = build_sma(pts, 1.0, 600);
    benchmark::DoNotOptimize(sma_features(s));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildSma)->Arg(100)->Arg(1000)->Arg(10000);

static void BM_Compile(benchmark::State& state) {
  auto& c = corpus();
  PipelineConfig cfg;
  for (auto _ : state) {
    SummaryRegistry reg;
    benchmark::DoNotOptimize(compile_captures(c.inputs, cfg, reg));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.packets));
}
BENCHMARK(BM_Compile)->Unit(benchmark::kMillisecond);

static void BM_Featurize(benchmark::State& state) {
  auto& c = corpus();
  PipelineConfig cfg;
  SummaryRegistry base;
  const auto compiled = compile_captures(c.inputs, cfg, base);
  for (auto _ : state) {
    SummaryRegistry reg = base;
    benchmark::DoNotOptimize(featurize_flows(compiled.flows, cfg, reg, c.labels));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(compiled.flows.size()));
}
BENCHMARK(BM_Featurize)->Unit(benchmark::kMillisecond);

static void BM_ForestPredict(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0, 1);
  std::vector<FeatureVector> xs(600);
  std::vector<int> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ys[i] = static_cast<int>(i % 3);
    for (int s = 1; s <= static_cast<int>(kFeatureCount); ++s) xs[i].set(s, noise(rng) + (s % 7 == 0 ? ys[i] : 0));
    xs[i] = apply_mode_mask(xs[i], Mode::HTTP);
  }
  ForestParams params;
  params.n_trees = static_cast<int>(state.range(0));
  const auto model = train(xs, ys, {"apt", "botnet", "legitimate"}, Mode::HTTP, params, 1);
  for (auto _ : state) benchmark::DoNotOptimize(predict_batch(model, xs));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(xs.size()));
}
BENCHMARK(BM_ForestPredict)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
