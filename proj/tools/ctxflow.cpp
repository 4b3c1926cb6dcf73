#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ctxflow/error.hpp"
#include "ctxflow/pipeline.hpp"
#include "ctxflow/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctxflow;

namespace {

constexpr int kUsage = 1;
constexpr int kDataError = 2;

struct Options {
  PipelineConfig cfg;
  std::string mode = "http";
  std::string task = "malicious";
  std::string emit = "fqdn,tcp-udp-icmp,http,https";
  std::string label = "unlabeled";
  std::string capture_name;
  fs::path flows;
  fs::path features;
  fs::path model;
  fs::path spec;
  fs::path blacklist_file;
  bool dump_profiles = false;
  bool importances = false;
  bool correlations = false;
  CorpusOptions corpus;
};

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

fs::path out_dir(const Options& o) { return o.cfg.outputs.empty() ? fs::path(".") : o.cfg.outputs; }

void finish_config(Options& o) {
  o.cfg.mode = parse_mode(o.mode);
  o.cfg.task = parse_task(o.task);
  o.cfg.emit = parse_variant_list(o.emit);
}

SummaryRegistry open_registry(const Options& o) {
  return o.cfg.registry.empty() ? SummaryRegistry{} : SummaryRegistry::open(o.cfg.registry);
}

void save_registry(SummaryRegistry& reg, const Options& o) {
  if (!o.cfg.registry.empty()) reg.persist(o.cfg.registry);
}

std::map<std::string, ClassLabel> labels_for(const Options& o, const fs::path& sibling) {
  if (!o.cfg.labels_file.empty()) return load_capture_labels(o.cfg.labels_file);
  const fs::path guess = sibling / "captures.csv";
  if (fs::exists(guess)) return load_capture_labels(guess);
  return {};
}

int cmd_compile(Options& o) {
  finish_config(o);
  o.cfg.validate(true);
  auto labels = o.cfg.labels_file.empty() ? std::map<std::string, ClassLabel>{}
                                          : load_capture_labels(o.cfg.labels_file);
  const auto fallback = parse_class_label(o.label);
  if (!fallback) throw ConfigError("unknown label '" + o.label + "'");
  auto inputs = list_captures(o.cfg.captures, labels, *fallback);
  if (!o.capture_name.empty()) {
    if (inputs.size() != 1) throw ConfigError("--capture-name needs a single capture file");
    inputs[0].label.capture_name = o.capture_name;
  }
  DomainAges ages;
  if (!o.cfg.ages_file.empty()) ages = load_domain_ages(o.cfg.ages_file);
  SummaryRegistry reg = open_registry(o);
  const CompileResult r = compile_captures(inputs, o.cfg, reg, o.cfg.ages_file.empty() ? nullptr : &ages);
  const fs::path dir = out_dir(o);
  write_compile_outputs(r, o.cfg, dir);
  {
    std::ofstream cl(dir / "captures.csv", std::ios::trunc);
    cl << "capture,class\n";
    for (const auto& [name, label] : r.capture_labels) cl << name << ',' << to_string(label) << '\n';
  }
  save_registry(reg, o);
  for (const auto& [key, n] : r.window_counts) {
    std::cout << key.first << "\twindow " << key.second << "\t" << n << " flows\n";
  }
  std::cout << "captures " << inputs.size() << ", packets " << r.decode.decoded << ", flows "
            << r.flows.size() << " (removed: FailedTCP " << r.hygiene.failed_tcp << ", NoData "
            << r.hygiene.no_data << ")\n";
  return 0;
}

int cmd_featurize(Options& o) {
  finish_config(o);
  o.cfg.validate();
  const fs::path dir = out_dir(o);
  const fs::path flows_path = o.flows.empty() ? dir / "pairflows.jsonl" : o.flows;
  const auto flows = read_flow_file(flows_path);
  const auto labels = labels_for(o, flows_path.parent_path());
  SummaryRegistry reg = open_registry(o);
  const FeaturizeResult fr = featurize_flows(flows, o.cfg, reg, labels);
  const auto rows = summary_rows(reg, o.cfg.mode, flows);
  write_features_csv(rows, dir / "features.csv", o.cfg.hash());
  json mask = mask_table_json();
  mask["config_hash"] = o.cfg.hash();
  write_json(mask, dir / "mask_table.json");
  if (o.dump_profiles) {
    json p = json::object();
    for (const auto& [iv, ps] : fr.profiles) p[std::to_string(iv)] = to_json(ps);
    write_json({{"config_hash", o.cfg.hash()}, {"intervals", p}}, dir / "profiles.json");
  }
  save_registry(reg, o);
  std::cout << "flows " << flows.size() << ", summaries " << rows.size() << " ("
            << to_string(o.cfg.mode) << " mode)\n";
  return 0;
}

int cmd_train(Options& o) {
  finish_config(o);
  o.cfg.validate();
  const fs::path dir = out_dir(o);
  const auto rows = read_features_csv(o.features.empty() ? dir / "features.csv" : o.features, o.cfg.mode);
  const TrainOutcome t = train_and_evaluate(rows, o.cfg);
  const fs::path models = o.cfg.models.empty() ? dir : o.cfg.models;
  const fs::path model_path = o.model.empty() ? models / "model.json" : o.model;
  if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
  save_model(t.model, model_path);
  write_json(eval_json(t, o.cfg), dir / "eval.json");
  std::printf("%s/%s: macro-F1 %.4f, weighted-F1 %.4f, FPR %.4f over %d repeats\n",
              std::string(to_string(o.cfg.task)).c_str(), std::string(to_string(o.cfg.mode)).c_str(),
              t.averaged.macro_f1, t.averaged.weighted_f1, t.averaged.fpr, o.cfg.repeats);
  return 0;
}

int cmd_classify(Options& o) {
  finish_config(o);
  const fs::path dir = out_dir(o);
  const ModelArtifact model = load_model(o.model.empty() ? dir / "model.json" : o.model);
  const auto rows = read_features_csv(o.features.empty() ? dir / "features.csv" : o.features, model.mode);
  SummaryRegistry reg = open_registry(o);
  if (!o.blacklist_file.empty()) {
    std::ifstream in(o.blacklist_file);
    if (!in) throw FileNotFound(o.blacklist_file.string());
    reg.blacklist().import_text(in);
  }
  const std::size_t before = reg.blacklist().size();
  Blacklist bl = reg.blacklist();
  const auto out = classify_rows(model, rows, bl);
  for (const auto& ip : bl.ips) {
    if (!reg.blacklist().ips.contains(ip)) reg.blacklist_ip(ip, bl.provenance.at("ip:" + ip.to_string()));
  }
  for (const auto& f : bl.fqdns) {
    if (!reg.blacklist().fqdns.contains(f)) reg.blacklist_fqdn(f, bl.provenance.at("fqdn:" + f));
  }
  write_predictions_csv(out, model, dir / "predictions.csv", o.cfg.hash());
  save_registry(reg, o);
  std::size_t blocked = 0;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : out) {
    if (r.verdict == Verdict::BLOCKED) ++blocked;
    ++counts[r.predicted_class];
  }
  std::cout << "classified " << out.size() << " summaries, blocked " << blocked
            << ", blacklist " << before << " -> " << reg.blacklist().size() << "\n";
  for (const auto& [c, n] : counts) std::cout << "  " << c << "\t" << n << "\n";
  return 0;
}

int cmd_report(Options& o) {
  finish_config(o);
  const fs::path dir = out_dir(o);
  const ModelArtifact model = load_model(o.model.empty() ? dir / "model.json" : o.model);
  const auto rows = read_features_csv(o.features.empty() ? dir / "features.csv" : o.features, model.mode);
  if (!o.importances && !o.correlations) o.importances = o.correlations = true;
  std::vector<FeatureVector> xs;
  std::vector<int> ys;
  std::vector<const SummaryRow*> used;
  Task task = Task::MULTICLASS;
  for (Task t : {Task::APT, Task::BOTNET, Task::MALICIOUS, Task::MULTICLASS}) {
    if (task_classes(t) == model.class_set) task = t;
  }
  for (const auto& r : rows) {
    const int y = task_label(task, r.label);
    if (y < 0) continue;
    xs.push_back(r.features);
    ys.push_back(y);
    used.push_back(&r);
  }
  const std::string hash = o.cfg.hash();
  if (o.importances) write_importances_csv(importance_table(model, xs, ys), dir / "importances.csv", hash);
  if (o.correlations) {
    std::map<std::string, LabelRow> ttps;
    if (!o.cfg.labels_file.empty()) ttps = read_labels(o.cfg.labels_file);
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;
    for (Ttp t : all_ttps()) {
      names.emplace_back(to_string(t));
      std::vector<double> c;
      for (const SummaryRow* r : used) {
        auto it = ttps.find(r->capture);
        c.push_back(it != ttps.end() && it->second.ttps.contains(t) ? 1.0 : 0.0);
      }
      cols.push_back(std::move(c));
    }
    for (const char* cls : {"apt", "botnet"}) {
      names.push_back(std::string("is_") + cls);
      std::vector<double> c;
      for (const SummaryRow* r : used) c.push_back(to_string(r->label) == cls ? 1.0 : 0.0);
      cols.push_back(std::move(c));
    }
    write_correlations_csv(correlate(xs, names, cols), dir / "correlations.csv", hash);
  }
  if (!ys.empty()) {
    const EvalReport e = evaluate(model, xs, ys);
    std::printf("macro-F1 %.4f, FPR %.4f on %zu labelled summaries\n", e.macro_f1, e.fpr, ys.size());
  }
  return 0;
}

int cmd_synth(Options& o, std::uint64_t seed, int n_threads) {
  std::vector<ScenarioSpec> specs;
  if (!o.spec.empty()) {
    std::ifstream in(o.spec);
    if (!in) throw FileNotFound(o.spec.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("spec: ") + e.what());
    }
    specs = specs_from_json(j, seed);
  } else {
    specs = default_corpus(seed, o.corpus);
  }
  const fs::path dir = out_dir(o);
  const PlantLedger ledger = generate_corpus(specs, dir, n_threads);
  std::size_t packets = 0;
  for (const auto& c : ledger.captures) packets += c.packets;
  write_json(template_table_json(), dir / "templates.json");
  std::cout << "captures " << ledger.captures.size() << ", planted flows " << ledger.flows.size()
            << ", packets " << packets << " -> " << dir.string() << "\n";
  return 0;
}

int cmd_registry_show(const Options& o) {
  const SummaryRegistry reg = SummaryRegistry::open(o.cfg.registry);
  std::cout << "pairs " << reg.directory().size() << ", summaries " << reg.summaries().size()
            << ", next cs_id " << reg.directory().next_cs_id() << ", blacklist "
            << reg.blacklist().size() << "\n";
  for (const auto& [id, s] : reg.summaries()) {
    std::cout << id << "\t" << s.pair.to_string() << "\tflows " << s.last_pf_id + 1 << "\t"
              << (s.label ? std::string(to_string(*s.label)) : "-") << "\n";
  }
  reg.blacklist().export_text(std::cout);
  return 0;
}

int cmd_registry_compact(const Options& o) {
  SummaryRegistry reg = SummaryRegistry::open(o.cfg.registry);
  reg.compact(o.cfg.registry);
  std::cout << "compacted " << reg.summaries().size() << " summaries\n";
  return 0;
}

int cmd_registry_import(const Options& o) {
  SummaryRegistry reg = SummaryRegistry::open(o.cfg.registry);
  std::ifstream in(o.blacklist_file);
  if (!in) throw FileNotFound(o.blacklist_file.string());
  Blacklist incoming;
  const std::size_t n = incoming.import_text(in);
  for (const auto& ip : incoming.ips) reg.blacklist_ip(ip, {});
  for (const auto& f : incoming.fqdns) reg.blacklist_fqdn(f, {});
  reg.persist(o.cfg.registry);
  std::cout << "imported " << n << " indicators\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual flow compiler, feature extractor and C&C classifier"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0: all cores)")->envname("CTXFLOW_THREADS");

  auto add_window = [&](CLI::App* c) {
    c->add_option("--window-seconds", o.cfg.window_seconds, "Window length t")->capture_default_str();
    c->add_option("--recompute-seconds", o.cfg.recompute_seconds, "Profile cadence t-hat")->capture_default_str();
  };
  auto add_out = [&](CLI::App* c) {
    c->add_option("--out", o.cfg.outputs, "Output directory")->envname("CTXFLOW_OUTPUT");
  };
  auto add_registry = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--registry", o.cfg.registry, "Summary registry directory")->envname("CTXFLOW_REGISTRY");
    if (required) opt->required();
  };
  auto add_model_opts = [&](CLI::App* c) {
    c->add_option("--mode", o.mode, "http or https")->capture_default_str();
    c->add_option("--task", o.task, "apt, botnet, malicious or multiclass")->capture_default_str();
    c->add_option("--seed", seed, "Root seed")->capture_default_str();
  };

  auto* compile = app.add_subcommand("compile", "Compile captures into PairFlows and variants");
  compile->add_option("--captures", o.cfg.captures, "Capture file or directory")->envname("CTXFLOW_CAPTURES")->required();
  compile->add_option("--label", o.label, "Class for captures missing from --labels")->capture_default_str();
  compile->add_option("--capture-name", o.capture_name, "Capture name for a single file");
  compile->add_option("--labels", o.cfg.labels_file, "CSV of capture,class");
  compile->add_option("--ages", o.cfg.ages_file, "Domain ages sidecar (fqdn days)")->envname("CTXFLOW_AGES");
  compile->add_option("--emit", o.emit, "Variants to export")->capture_default_str();
  add_window(compile);
  add_out(compile);
  add_registry(compile, false);

  auto* featurize = app.add_subcommand("featurize", "Extract feature vectors and update summaries");
  featurize->add_option("--flows", o.flows, "PairFlow file (default <out>/pairflows.jsonl)");
  featurize->add_option("--labels", o.cfg.labels_file, "CSV of capture,class");
  featurize->add_option("--sma-rate", o.cfg.sma_rate, "SMA bucket width (s)")->capture_default_str();
  featurize->add_option("--sma-k", o.cfg.sma_k, "SMA trailing points")->capture_default_str();
  featurize->add_option("--mode", o.mode, "http or https")->capture_default_str();
  featurize->add_flag("--dump-profiles", o.dump_profiles, "Write profiles.json");
  add_window(featurize);
  add_out(featurize);
  add_registry(featurize, false);

  auto* trainc = app.add_subcommand("train", "Train and evaluate a random forest");
  trainc->add_option("--features", o.features, "features.csv (default <out>/features.csv)");
  trainc->add_option("--model", o.model, "Model output path");
  trainc->add_option("--models", o.cfg.models, "Model directory")->envname("CTXFLOW_MODELS");
  trainc->add_option("--trees", o.cfg.n_trees, "Trees")->capture_default_str();
  trainc->add_option("--repeats", o.cfg.repeats, "Seeded split repeats")->capture_default_str();
  trainc->add_option("--test-fraction", o.cfg.test_fraction, "Held-out fraction")->capture_default_str();
  add_model_opts(trainc);
  add_out(trainc);

  auto* classify = app.add_subcommand("classify", "Classify summaries with blacklist precedence");
  classify->add_option("--model", o.model, "Model file")->envname("CTXFLOW_MODEL");
  classify->add_option("--features", o.features, "features.csv");
  classify->add_option("--blacklist", o.blacklist_file, "Extra ip:/fqdn: indicators");
  add_out(classify);
  add_registry(classify, false);

  auto* report = app.add_subcommand("report", "Feature importances and TTP correlations");
  report->add_option("--model", o.model, "Model file")->envname("CTXFLOW_MODEL");
  report->add_option("--features", o.features, "features.csv");
  report->add_option("--labels", o.cfg.labels_file, "labels.csv with TTP columns");
  report->add_flag("--importances", o.importances, "Write importances.csv");
  report->add_flag("--correlations", o.correlations, "Write correlations.csv");
  add_out(report);

  auto* synth = app.add_subcommand("synth", "Generate a labelled synthetic corpus");
  synth->add_option("--spec", o.spec, "Scenario JSON");
  synth->add_option("--seed", seed, "Root seed")->capture_default_str();
  synth->add_option("--apt", o.corpus.n_apt, "APT captures without --spec")->capture_default_str();
  synth->add_option("--botnet", o.corpus.n_botnet, "Botnet captures without --spec")->capture_default_str();
  synth->add_option("--legitimate", o.corpus.n_legitimate, "Legitimate captures without --spec")->capture_default_str();
  synth->add_option("--confound-rate", o.corpus.confound_rate, "Legitimate flows with APT-like timing")->capture_default_str();
  add_out(synth);

  auto* registry = app.add_subcommand("registry", "Inspect or maintain the summary registry");
  registry->require_subcommand(1);
  auto* show = registry->add_subcommand("show", "Print summaries and blacklist");
  auto* compact = registry->add_subcommand("compact", "Fold the event log into the snapshot");
  auto* import = registry->add_subcommand("import-blacklist", "Import ip:/fqdn: indicators");
  import->add_option("file", o.blacklist_file, "Indicator file")->required();
  for (auto* c : {show, compact, import}) add_registry(c, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }
  o.cfg.seed = seed;
  o.cfg.threads = threads;

  try {
    if (*compile) return cmd_compile(o);
    if (*featurize) return cmd_featurize(o);
    if (*trainc) return cmd_train(o);
    if (*classify) return cmd_classify(o);
    if (*report) return cmd_report(o);
    if (*synth) return cmd_synth(o, seed, threads);
    if (*show) return cmd_registry_show(o);
    if (*compact) return cmd_registry_compact(o);
    if (*import) return cmd_registry_import(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
