#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxflow/features.hpp"

namespace ctxflow {

enum class Criterion : std::uint8_t { Gini, Entropy };

struct ForestParams {
  int n_trees = 100;
  int max_depth = 0;      // 0: unlimited
  int max_features = 0;   // 0: round(sqrt(102))
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  Criterion criterion = Criterion::Gini;
  bool bootstrap = true;
  bool balanced_class_weight = false;
  int threads = 0;  // 0: hardware concurrency
};

struct TreeNode {
  int feature = -1;  // 0-based slot; -1 for a leaf
  double threshold = 0;  // go left when value <= threshold
  int left = -1;
  int right = -1;
  std::vector<double> distribution;  // leaf class frequencies, sums to 1
  double weighted_impurity_decrease = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const std::vector<double>& leaf_distribution(
      std::span<const double> x) const;
  bool operator==(const DecisionTree&) const = default;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::string dataset_hash;
  std::string config_hash;
  std::string created;  // empty unless explicitly stamped
  std::size_t n_samples = 0;
  bool operator==(const TrainingMeta&) const = default;
};

struct ModelArtifact {
  std::vector<DecisionTree> trees;
  Mode mode = Mode::HTTP;
  FeatureBits feature_mask;
  std::vector<std::string> class_set;
  ForestParams params;
  TrainingMeta training_meta;

  std::size_t n_trees() const { return trees.size(); }
};

struct Prediction {
  int label = 0;  // index into class_set
  std::vector<double> scores;
};

// Bootstrap-sampled trees with a random feature subset per split, drawn only
// from mode-active slots. Throws DegenerateData (fewer than two classes) and
// MaskMismatch (a vector built under another mode).
ModelArtifact train(std::span<const FeatureVector> features,
                    std::span<const int> labels,
                    std::vector<std::string> class_set, Mode mode,
                    const ForestParams& params, std::uint64_t seed);

Prediction predict(const ModelArtifact& model, const FeatureVector& v);
std::vector<Prediction> predict_batch(const ModelArtifact& model,
                                      std::span<const FeatureVector> vs);

// Mean decrease in impurity per slot, normalised to sum to 1.
std::vector<double> impurity_importances(const ModelArtifact& model);

// Number of split nodes referencing a slot outside the model's mask.
std::size_t count_masked_splits(const ModelArtifact& model);

nlohmann::json to_json(const ModelArtifact& model);
ModelArtifact model_from_json(const nlohmann::json& j);
void save_model(const ModelArtifact& model, const std::filesystem::path& path);
ModelArtifact load_model(const std::filesystem::path& path);

inline constexpr int kModelFormatVersion = 1;

}  // namespace ctxflow
