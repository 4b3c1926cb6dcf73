#include "ctxflow/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "ctxflow/error.hpp"
#include "ctxflow/stats.hpp"

namespace ctxflow {

using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

unsigned worker_count(int requested, std::size_t jobs) {
  unsigned n = requested > 0 ? static_cast<unsigned>(requested)
                             : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(n, jobs)));
}

// Runs fn(i) for i in [0, n) on a small pool; the first exception wins.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  if (n == 0) return;
  const unsigned workers = worker_count(threads, n);
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr err;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& path, const std::string& config_hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# config_hash=" << config_hash << '\n';
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

bool is_capture_file(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return ext == ".pcap" || ext == ".pcapng" || ext == ".cap";
}

struct CaptureWork {
  std::vector<PairFlow> flows;  // flow ids patched after assignment
  DecodeReport report;
};

}  // namespace

std::string_view to_string(Task t) {
  switch (t) {
    case Task::APT: return "apt";
    case Task::BOTNET: return "botnet";
    case Task::MALICIOUS: return "malicious";
    case Task::MULTICLASS: return "multiclass";
  }
  return "?";
}

Task parse_task(std::string_view text) {
  for (Task t : {Task::APT, Task::BOTNET, Task::MALICIOUS, Task::MULTICLASS}) {
    if (to_string(t) == text) return t;
  }
  throw ConfigError("unknown task '" + std::string(text) +
                    "' (expected apt, botnet, malicious or multiclass)");
}

std::vector<std::string> task_classes(Task t) {
  switch (t) {
    case Task::APT: return {"apt", "legitimate"};
    case Task::BOTNET: return {"botnet", "legitimate"};
    case Task::MALICIOUS: return {"malicious", "legitimate"};
    case Task::MULTICLASS: return {"apt", "botnet", "legitimate"};
  }
  return {};
}

int task_label(Task t, ClassLabel label) {
  if (label == ClassLabel::UNLABELED) return -1;
  switch (t) {
    case Task::APT:
      return label == ClassLabel::APT ? 0 : label == ClassLabel::LEGITIMATE ? 1 : -1;
    case Task::BOTNET:
      return label == ClassLabel::BOTNET ? 0 : label == ClassLabel::LEGITIMATE ? 1 : -1;
    case Task::MALICIOUS: return label == ClassLabel::LEGITIMATE ? 1 : 0;
    case Task::MULTICLASS:
      return label == ClassLabel::APT ? 0 : label == ClassLabel::BOTNET ? 1 : 2;
  }
  return -1;
}

void PipelineConfig::validate(bool require_captures) const {
  if (!(window_seconds > 0)) throw ConfigError("window length t must be positive");
  if (!(recompute_seconds > window_seconds)) {
    throw ConfigError("recompute interval t-hat must exceed the window length t");
  }
  if (!(sma_rate > 0)) throw ConfigError("SMA sample rate must be positive");
  if (sma_k < 1) throw ConfigError("SMA k must be at least 1");
  if (n_trees < 1) throw ConfigError("tree count must be at least 1");
  if (repeats < 1) throw ConfigError("repeat count must be at least 1");
  if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test fraction must be in (0, 1)");
  if (require_captures && !std::filesystem::exists(captures)) {
    throw ConfigError("capture path does not exist: " + captures.string());
  }
  if (!ages_file.empty() && !std::filesystem::exists(ages_file)) {
    throw ConfigError("domain ages file does not exist: " + ages_file.string());
  }
  if (!labels_file.empty() && !std::filesystem::exists(labels_file)) {
    throw ConfigError("labels file does not exist: " + labels_file.string());
  }
}

json PipelineConfig::to_json() const {
  json variants = json::array();
  for (Variant v : emit) variants.push_back(variant_name(v));
  return {{"window_seconds", window_seconds},
          {"recompute_seconds", recompute_seconds},
          {"sma_rate", sma_rate},
          {"sma_k", sma_k},
          {"mode", to_string(mode)},
          {"task", to_string(task)},
          {"seed", seed},
          {"n_trees", n_trees},
          {"repeats", repeats},
          {"test_fraction", test_fraction},
          {"emit", variants}};
}

std::string PipelineConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : to_json().dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::map<std::string, ClassLabel> load_capture_labels(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw FileNotFound(csv.string());
  std::map<std::string, ClassLabel> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cols = split(line, ',');
    if (first) {
      first = false;
      if (cols[0] == "capture") continue;
    }
    if (cols.size() < 2) throw FormatError(csv.string() + ": expected capture,class");
    auto label = parse_class_label(cols[1]);
    if (!label) throw FormatError(csv.string() + ": unknown class '" + cols[1] + "'");
    out[cols[0]] = *label;
  }
  return out;
}

std::vector<CaptureInput> list_captures(const std::filesystem::path& path,
                                        const std::map<std::string, ClassLabel>& labels,
                                        ClassLabel fallback) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      if (e.is_regular_file() && is_capture_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (std::filesystem::exists(path)) {
    files.push_back(path);
  } else {
    throw FileNotFound(path.string());
  }
  std::vector<CaptureInput> out;
  for (auto& f : files) {
    CaptureInput in;
    in.label.capture_name = f.stem().string();
    auto it = labels.find(in.label.capture_name);
    in.label.class_label = it != labels.end() ? it->second : fallback;
    in.path = std::move(f);
    out.push_back(std::move(in));
  }
  return out;
}

CompileResult compile_captures(const std::vector<CaptureInput>& inputs, const PipelineConfig& cfg,
                               SummaryRegistry& registry, const DomainAges* ages) {
  cfg.validate();
  std::vector<CaptureWork> work(inputs.size());
  const PairDirectory& dir = registry.directory();

  parallel_for(inputs.size(), cfg.threads, [&](std::size_t i) {
    const CaptureInput& in = inputs[i];
    CaptureWork& w = work[i];
    std::set<PairKey> seen;
    const OrientationHint hint = [&](const PairKey& k) {
      return seen.contains(k) || dir.contains(k);
    };
    auto handle = [&](const WindowBatch& batch) {
      TrackedWindow tw = track_pairs(batch, hint);
      attach_dns(tw.pairs, tw.dns_pool);
      for (auto& [key, packets] : tw.pairs) {
        seen.insert(key);
        w.flows.push_back(encapsulate(FlowId{}, key, packets, tw.window, ages));
      }
    };
    WindowBuffer buf(in.label.capture_name, cfg.window_seconds);
    w.report = decode_capture(in.path, [&](RawPacket&& p) {
      for (const auto& b : buf.push(std::move(p))) handle(b);
    });
    if (auto last = buf.finish()) handle(*last);
  });

  CompileResult r;
  std::vector<PairFlow> all;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    r.capture_labels[inputs[i].label.capture_name] = inputs[i].label.class_label;
    const DecodeReport& d = work[i].report;
    r.decode.records += d.records;
    r.decode.decoded += d.decoded;
    r.decode.degraded += d.degraded;
    r.decode.skipped_non_ip += d.skipped_non_ip;
    r.decode.decode_failures += d.decode_failures;
    r.decode.truncated_tail = r.decode.truncated_tail || d.truncated_tail;
    // Flows arrive per capture in window order, pairs sorted within a
    // window, so ids are assigned deterministically and monotonically.
    for (auto& f : work[i].flows) {
      f.flow_id = registry.assign_flow_id(f.pair);
      all.push_back(std::move(f));
    }
    work[i].flows.clear();
  }
  HygieneResult h = hygiene_filter(std::move(all));
  r.flows = std::move(h.kept);
  r.hygiene = std::move(h.report);
  for (const auto& f : r.flows) {
    const auto w = window_index_of(f.time_window.start + 1e-9, cfg.window_seconds);
    ++r.window_counts[{f.pair.capture_name, w}];
  }
  return r;
}

void write_compile_outputs(const CompileResult& r, const PipelineConfig& cfg,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string hash = cfg.hash();
  write_pairflows(r.flows, dir / "pairflows.jsonl", hash);
  for (Variant v : cfg.emit) export_variant(r.flows, v, dir / variant_file_name(v), hash);
}

std::int64_t profile_interval(const PairFlow& flow, double recompute_seconds) {
  return static_cast<std::int64_t>(std::floor(flow.time_window.start / recompute_seconds + 1e-12));
}

FeaturizeResult featurize_flows(std::span<const PairFlow> flows, const PipelineConfig& cfg,
                                SummaryRegistry& registry,
                                const std::map<std::string, ClassLabel>& labels) {
  cfg.validate();
  FeaturizeResult out;
  std::map<std::int64_t, std::vector<std::size_t>> by_interval;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    by_interval[profile_interval(flows[i], cfg.recompute_seconds)].push_back(i);
  }
  std::vector<std::int64_t> intervals;
  for (auto& [iv, idx] : by_interval) {
    std::vector<PairFlow> subset;
    subset.reserve(idx.size());
    for (std::size_t i : idx) subset.push_back(flows[i]);
    out.profiles.emplace(iv, pivot_profiles(subset));
    intervals.push_back(iv);
  }

  out.flow_vectors.resize(flows.size());
  std::vector<std::int64_t> interval_of(flows.size());
  for (const auto& [iv, idx] : by_interval) {
    for (std::size_t i : idx) interval_of[i] = iv;
  }
  std::map<std::int64_t, std::unique_ptr<FeatureExtractor>> extractors;
  for (const auto& [iv, ps] : out.profiles) {
    extractors.emplace(iv, std::make_unique<FeatureExtractor>(ps, cfg.feature_config()));
  }
  parallel_for(flows.size(), cfg.threads, [&](std::size_t i) {
    out.flow_vectors[i] = extractors.at(interval_of[i])->extract(flows[i]);
  });

  std::vector<std::size_t> order(flows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& fa = flows[a];
    const auto& fb = flows[b];
    if (fa.time_window.start != fb.time_window.start) return fa.time_window.start < fb.time_window.start;
    return fa.flow_id < fb.flow_id;
  });
  std::set<std::int64_t> touched;
  static const std::vector<std::string> kNoUas;
  for (std::size_t i : order) {
    const PairFlow& f = flows[i];
    const ProfileSet& ps = out.profiles.at(interval_of[i]);
    const auto host = ps.hosts.find(HostKey{f.pair.capture_name, f.pair.source});
    const auto& uas = host != ps.hosts.end() ? host->second.ua_strings : kNoUas;
    registry.upsert(out.flow_vectors[i], f, uas, interval_of[i]);
    if (touched.insert(f.flow_id.cs_id).second) out.touched.push_back(f.flow_id.cs_id);
    if (auto it = labels.find(f.pair.capture_name);
        it != labels.end() && it->second != ClassLabel::UNLABELED) {
      const ContextualSummary* s = registry.find(f.flow_id.cs_id);
      if (s && s->label != it->second) registry.set_label(f.flow_id.cs_id, it->second);
    }
  }
  return out;
}

std::vector<SummaryRow> summary_rows(const SummaryRegistry& registry, Mode mode,
                                     std::span<const PairFlow> flows) {
  std::map<std::int64_t, std::set<std::string>> fqdns;
  for (const auto& f : flows) {
    auto& s = fqdns[f.flow_id.cs_id];
    for (const auto& r : f.fqdns) s.insert(r.fqdn);
  }
  std::vector<SummaryRow> rows;
  for (const auto& [cs_id, s] : registry.summaries()) {
    SummaryRow row;
    row.cs_id = cs_id;
    row.capture = s.pair.capture_name;
    row.source = s.pair.source.to_string();
    row.destination = s.pair.destination.to_string();
    if (auto it = fqdns.find(cs_id); it != fqdns.end()) row.fqdns.assign(it->second.begin(), it->second.end());
    row.label = s.label.value_or(ClassLabel::UNLABELED);
    row.features = apply_mode_mask(s.features, mode);
    row.features.flow_id = {cs_id, s.last_flow_pf_id};
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_features_csv(std::span<const SummaryRow> rows, const std::filesystem::path& path,
                        const std::string& config_hash) {
  std::ofstream out = open_csv(path, config_hash);
  out << "cs_id,capture,source,destination,fqdns,label";
  for (const auto& c : feature_column_names()) out << ',' << c;
  out << '\n';
  for (const auto& r : rows) {
    std::string fq;
    for (const auto& f : r.fqdns) fq += (fq.empty() ? "" : ";") + f;
    out << r.cs_id << ',' << r.capture << ',' << r.source << ',' << r.destination << ',' << fq
        << ',' << to_string(r.label);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      out << ',';
      if (r.features.present[i]) out << fmt_double(r.features.values[i]);
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<SummaryRow> read_features_csv(const std::filesystem::path& path, Mode mode,
                                          std::string* config_hash) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path.string());
  std::vector<SummaryRow> rows;
  std::string line;
  bool header = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# config_hash=";
      if (config_hash && line.rfind(key, 0) == 0) *config_hash = line.substr(key.size());
      continue;
    }
    if (header) {
      header = false;
      continue;
    }
    const auto cols = split(line, ',');
    if (cols.size() != 6 + kFeatureCount) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(6 + kFeatureCount) + " columns");
    }
    SummaryRow r;
    try {
      r.cs_id = std::stoll(cols[0]);
      r.capture = cols[1];
      r.source = cols[2];
      r.destination = cols[3];
      if (!cols[4].empty()) r.fqdns = split(cols[4], ';');
      r.label = parse_class_label(cols[5]).value_or(ClassLabel::UNLABELED);
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        const std::string& c = cols[6 + i];
        if (!c.empty()) {
          r.features.values[i] = std::stod(c);
          r.features.present[i] = true;
        }
      }
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
    r.features.flow_id = {r.cs_id, 0};
    r.features.mask = mode;
    r.features = apply_mode_mask(std::move(r.features), mode);
    rows.push_back(std::move(r));
  }
  return rows;
}

TrainOutcome train_and_evaluate(std::span<const SummaryRow> rows, const PipelineConfig& cfg,
                                bool fit_final) {
  cfg.validate();
  std::vector<FeatureVector> xs;
  std::vector<int> ys;
  std::vector<std::string> groups;
  for (const auto& r : rows) {
    const int y = task_label(cfg.task, r.label);
    if (y < 0) continue;
    xs.push_back(apply_mode_mask(r.features, cfg.mode));
    ys.push_back(y);
    groups.push_back(r.capture);
  }
  const auto classes = task_classes(cfg.task);
  ForestParams params;
  params.n_trees = cfg.n_trees;
  params.threads = cfg.threads;

  TrainOutcome out;
  for (int rep = 0; rep < cfg.repeats; ++rep) {
    const std::uint64_t s = splitmix(cfg.seed + static_cast<std::uint64_t>(rep) + 1);
    const SplitIndices split_idx = group_split(groups, ys, cfg.test_fraction, s);
    std::vector<FeatureVector> tx, vx;
    std::vector<int> ty, vy;
    for (std::size_t i : split_idx.train) {
      tx.push_back(xs[i]);
      ty.push_back(ys[i]);
    }
    for (std::size_t i : split_idx.test) {
      vx.push_back(xs[i]);
      vy.push_back(ys[i]);
    }
    const ModelArtifact m = train(tx, ty, classes, cfg.mode, params, splitmix(s));
    out.repeats.push_back(evaluate(m, vx, vy));
  }
  out.averaged = average_reports(out.repeats);
  if (fit_final) {
    out.model = train(xs, ys, classes, cfg.mode, params, splitmix(cfg.seed));
    out.model.training_meta.config_hash = cfg.hash();
  }
  return out;
}

json eval_json(const TrainOutcome& t, const PipelineConfig& cfg) {
  json reps = json::array();
  for (const auto& r : t.repeats) reps.push_back(to_json(r));
  return {{"config_hash", cfg.hash()},
          {"config", cfg.to_json()},
          {"averaged", to_json(t.averaged)},
          {"repeats", reps}};
}

std::vector<ClassifiedRow> classify_rows(const ModelArtifact& model,
                                         std::span<const SummaryRow> rows, Blacklist& blacklist) {
  int negative = -1;
  for (std::size_t i = 0; i < model.class_set.size(); ++i) {
    if (model.class_set[i] == "legitimate") negative = static_cast<int>(i);
  }
  std::vector<ClassifiedRow> out;
  for (const auto& r : rows) {
    ClassifiedRow c;
    c.cs_id = r.cs_id;
    c.capture = r.capture;
    c.source = r.source;
    c.destination = r.destination;
    const auto dst = IpAddress::parse(r.destination);
    bool blocked = dst && blacklist.ips.contains(*dst);
    for (const auto& f : r.fqdns) blocked = blocked || blacklist.fqdns.contains(f);
    if (blocked) {
      c.verdict = Verdict::BLOCKED;
      c.predicted_class = "blocked";
      out.push_back(std::move(c));
      continue;
    }
    Prediction p = predict(model, apply_mode_mask(r.features, model.mode));
    c.predicted_class = model.class_set[static_cast<std::size_t>(p.label)];
    if (p.label != negative) {
      const Blacklist::Provenance prov{r.cs_id, 0};
      if (dst) blacklist.add_ip(*dst, prov);
      for (const auto& f : r.fqdns) blacklist.add_fqdn(f, prov);
    }
    c.prediction = std::move(p);
    out.push_back(std::move(c));
  }
  return out;
}

void write_predictions_csv(std::span<const ClassifiedRow> rows, const ModelArtifact& model,
                           const std::filesystem::path& path, const std::string& config_hash) {
  std::ofstream out = open_csv(path, config_hash);
  out << "cs_id,capture,source,destination,verdict,predicted";
  for (const auto& c : model.class_set) out << ",score_" << c;
  out << '\n';
  for (const auto& r : rows) {
    out << r.cs_id << ',' << r.capture << ',' << r.source << ',' << r.destination << ','
        << to_string(r.verdict) << ',' << r.predicted_class;
    for (std::size_t i = 0; i < model.class_set.size(); ++i) {
      out << ',';
      if (r.prediction) out << fmt_double(r.prediction->scores[i]);
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

void write_importances_csv(std::span<const ImportanceRow> rows, const std::filesystem::path& path,
                           const std::string& config_hash) {
  std::ofstream out = open_csv(path, config_hash);
  out << "slot,name,impurity_importance,information_gain\n";
  for (const auto& r : rows) {
    out << r.slot << ',' << r.name << ',' << fmt_double(r.impurity_importance) << ','
        << fmt_double(r.information_gain) << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

void write_correlations_csv(const CorrelationMatrix& m, const std::filesystem::path& path,
                            const std::string& config_hash) {
  std::ofstream out = open_csv(path, config_hash);
  out << "slot,name";
  for (const auto& n : m.indicators) out << ',' << n;
  out << '\n';
  for (std::size_t f = 0; f < m.values.size(); ++f) {
    out << f + 1 << ',' << slot_table()[f].name;
    for (double v : m.values[f]) out << ',' << fmt_double(v);
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace ctxflow
