#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxflow/features.hpp"
#include "ctxflow/forest.hpp"

namespace ctxflow {

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  std::int64_t support = 0;
};

struct EvalReport {
  std::vector<std::string> classes;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0;
  double fpr = 0;  // legitimate is the negative class
  double accuracy = 0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  std::vector<double> importances;                   // per slot, may be empty
};

// `negative_class` indexes the legitimate class in `classes`.
EvalReport evaluate_predictions(const std::vector<std::string>& classes,
                                std::span<const int> truth,
                                std::span<const int> predicted,
                                int negative_class);

// Builds the report from a binary confusion matrix (positive/negative).
EvalReport evaluate_binary_counts(std::int64_t tp, std::int64_t fn,
                                  std::int64_t fp, std::int64_t tn);

EvalReport evaluate(const ModelArtifact& model,
                    std::span<const FeatureVector> features,
                    std::span<const int> labels);

// Mean of each numeric field over several reports (confusion matrices are
// summed).
EvalReport average_reports(std::span<const EvalReport> reports);

nlohmann::json to_json(const EvalReport& r);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Stratified split by group: every group lands wholly in train or test, and
// each class contributes about `test_fraction` of its groups to test.
SplitIndices group_split(std::span<const std::string> groups,
                         std::span<const int> labels, double test_fraction,
                         std::uint64_t seed);

struct ImportanceRow {
  int slot = 0;  // 1-based
  std::string name;
  double impurity_importance = 0;
  double information_gain = 0;  // bits, on the evaluation data
};

// Information gain of each slot about the label, using the best binary
// threshold on the given data.
std::vector<double> information_gain(std::span<const FeatureVector> features,
                                     std::span<const int> labels,
                                     int n_classes);

std::vector<ImportanceRow> importance_table(
    const ModelArtifact& model, std::span<const FeatureVector> features,
    std::span<const int> labels);

double pearson(std::span<const double> a, std::span<const double> b);

// Pearson correlation of every slot against every indicator column. Analysis
// only: nothing here feeds detection.
struct CorrelationMatrix {
  std::vector<std::string> indicators;
  std::vector<std::vector<double>> values;  // [slot][indicator]
};

CorrelationMatrix correlate(std::span<const FeatureVector> features,
                            const std::vector<std::string>& indicator_names,
                            const std::vector<std::vector<double>>& indicators);

}  // namespace ctxflow
