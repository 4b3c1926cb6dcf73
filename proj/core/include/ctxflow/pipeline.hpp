#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxflow/evaluation.hpp"
#include "ctxflow/features.hpp"
#include "ctxflow/forest.hpp"
#include "ctxflow/hygiene.hpp"
#include "ctxflow/ingest.hpp"
#include "ctxflow/pairflow.hpp"
#include "ctxflow/profiler.hpp"
#include "ctxflow/summary_store.hpp"
#include "ctxflow/variants.hpp"

namespace ctxflow {

enum class Task : std::uint8_t { APT, BOTNET, MALICIOUS, MULTICLASS };
std::string_view to_string(Task t);
Task parse_task(std::string_view text);  // ConfigError on unknown names
std::vector<std::string> task_classes(Task t);
// Class index under `t`, or -1 when the label does not take part.
int task_label(Task t, ClassLabel label);

struct PipelineConfig {
  double window_seconds = 600;     // t
  double recompute_seconds = 900;  // t-hat, profile cadence
  double sma_rate = 1.0;
  int sma_k = 600;
  Mode mode = Mode::HTTP;
  Task task = Task::MALICIOUS;
  std::uint64_t seed = 0;
  int threads = 0;
  int n_trees = 100;
  int repeats = 10;
  double test_fraction = 0.3;
  std::vector<Variant> emit = {Variant::FQDN, Variant::PLANES, Variant::HTTP, Variant::HTTPS};
  std::filesystem::path captures;  // file or directory
  std::filesystem::path registry;
  std::filesystem::path models;
  std::filesystem::path outputs;
  std::filesystem::path ages_file;
  std::filesystem::path labels_file;

  // Throws ConfigError; `require_captures` also checks the capture path.
  void validate(bool require_captures = false) const;
  // Parameters that shape outputs; paths and thread counts are excluded.
  nlohmann::json to_json() const;
  std::string hash() const;  // FNV-1a 64 of to_json().dump(), hex
  FeatureConfig feature_config() const { return {sma_rate, sma_k}; }
};

struct CaptureInput {
  std::filesystem::path path;
  CaptureLabel label;
};

// Capture files under `path` (sorted), labelled from `labels` when given,
// else with `fallback`.
std::vector<CaptureInput> list_captures(const std::filesystem::path& path,
                                        const std::map<std::string, ClassLabel>& labels,
                                        ClassLabel fallback = ClassLabel::UNLABELED);
std::map<std::string, ClassLabel> load_capture_labels(const std::filesystem::path& csv);

struct CompileResult {
  std::vector<PairFlow> flows;  // hygiene survivors, deterministic order
  HygieneReport hygiene;
  DecodeReport decode;  // summed over captures
  std::map<std::pair<std::string, std::int64_t>, std::size_t> window_counts;
  std::map<std::string, ClassLabel> capture_labels;
};

// ingest -> window -> track -> attach -> assign -> encapsulate -> hygiene.
// Captures are processed in parallel; flow ids are assigned in input order.
CompileResult compile_captures(const std::vector<CaptureInput>& inputs,
                               const PipelineConfig& cfg, SummaryRegistry& registry,
                               const DomainAges* ages = nullptr);

// Writes pairflows.jsonl plus the requested variant files.
void write_compile_outputs(const CompileResult& r, const PipelineConfig& cfg,
                           const std::filesystem::path& dir);

struct FeaturizeResult {
  std::vector<FeatureVector> flow_vectors;  // one per flow, input order
  std::map<std::int64_t, ProfileSet> profiles;  // keyed by profile interval
  std::vector<std::int64_t> touched;            // cs_ids in first-touch order
};

std::int64_t profile_interval(const PairFlow& flow, double recompute_seconds);

// Pivots profiles per interval, extracts vectors and folds them into the
// registry's summaries. Flows are folded in (window start, cs_id) order.
FeaturizeResult featurize_flows(std::span<const PairFlow> flows, const PipelineConfig& cfg,
                                SummaryRegistry& registry,
                                const std::map<std::string, ClassLabel>& labels = {});

// One classifier input row: a contextual summary's masked vector.
struct SummaryRow {
  std::int64_t cs_id = 0;
  std::string capture;
  std::string source;
  std::string destination;
  std::vector<std::string> fqdns;
  ClassLabel label = ClassLabel::UNLABELED;
  FeatureVector features;
};

std::vector<SummaryRow> summary_rows(const SummaryRegistry& registry, Mode mode,
                                     std::span<const PairFlow> flows = {});
void write_features_csv(std::span<const SummaryRow> rows, const std::filesystem::path& path,
                        const std::string& config_hash);
std::vector<SummaryRow> read_features_csv(const std::filesystem::path& path, Mode mode,
                                          std::string* config_hash = nullptr);

struct TrainOutcome {
  ModelArtifact model;  // fitted on every eligible row
  EvalReport averaged;  // over the seeded group-split repeats
  std::vector<EvalReport> repeats;
};

// Groups are captures, so a host (and each of its pairs) never appears on
// both sides of a split.
TrainOutcome train_and_evaluate(std::span<const SummaryRow> rows, const PipelineConfig& cfg,
                                bool fit_final = true);

nlohmann::json eval_json(const TrainOutcome& t, const PipelineConfig& cfg);

struct ClassifiedRow {
  std::int64_t cs_id = 0;
  std::string capture, source, destination;
  Verdict verdict = Verdict::PASS;
  std::optional<Prediction> prediction;  // absent when blocked
  std::string predicted_class;
};

// Blacklisted pairs are blocked before the model runs; detections feed the
// blacklist so later rows are re-checked against it.
std::vector<ClassifiedRow> classify_rows(const ModelArtifact& model,
                                         std::span<const SummaryRow> rows,
                                         Blacklist& blacklist);
void write_predictions_csv(std::span<const ClassifiedRow> rows, const ModelArtifact& model,
                           const std::filesystem::path& path, const std::string& config_hash);

void write_importances_csv(std::span<const ImportanceRow> rows, const std::filesystem::path& path,
                           const std::string& config_hash);
void write_correlations_csv(const CorrelationMatrix& m, const std::filesystem::path& path,
                            const std::string& config_hash);

}  // namespace ctxflow
