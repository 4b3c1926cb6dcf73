#include "ctxflow/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include "ctxflow/error.hpp"

namespace ctxflow {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double impurity(const std::vector<double>& w, double total, Criterion c) {
  if (total <= 0) return 0;
  double acc = 0;
  if (c == Criterion::Gini) {
    for (double x : w) acc += (x / total) * (x / total);
    return 1 - acc;
  }
  for (double x : w) {
    if (x > 0) acc -= (x / total) * std::log2(x / total);
  }
  return acc;
}

struct Sample {
  std::size_t row;
  double weight;
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const FeatureVector> xs, std::span<const int> ys, int n_classes,
              const std::vector<double>& class_weight, const std::vector<int>& active,
              const ForestParams& p, std::uint64_t seed)
      : xs_(xs), ys_(ys), k_(n_classes), class_weight_(class_weight), active_(active), p_(p),
        rng_(seed) {}

  DecisionTree build(std::vector<Sample> samples) {
    DecisionTree tree;
    tree.nodes.emplace_back();
    struct Task {
      int node;
      std::vector<Sample> samples;
      int depth;
    };
    std::vector<Task> stack;
    stack.push_back({0, std::move(samples), 0});
    while (!stack.empty()) {
      Task t = std::move(stack.back());
      stack.pop_back();
      std::vector<double> w(static_cast<std::size_t>(k_), 0.0);
      double n_w = 0;
      for (const auto& s : t.samples) {
        const double sw = s.weight * class_weight_[static_cast<std::size_t>(ys_[s.row])];
        w[static_cast<std::size_t>(ys_[s.row])] += sw;
        n_w += sw;
      }
      const double imp = impurity(w, n_w, p_.criterion);
      std::size_t n_rows = 0;
      for (const auto& s : t.samples) n_rows += static_cast<std::size_t>(s.weight);

      Split best;
      const bool can_split = imp > 1e-12 &&
                             n_rows >= static_cast<std::size_t>(std::max(p_.min_samples_split, 2)) &&
                             (p_.max_depth <= 0 || t.depth < p_.max_depth);
      if (can_split) best = find_split(t.samples, w, n_w, imp);

      TreeNode& node = tree.nodes[static_cast<std::size_t>(t.node)];
      if (!best.found) {
        node.distribution = w;
        for (auto& x : node.distribution) x = n_w > 0 ? x / n_w : 0;
        continue;
      }
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.weighted_impurity_decrease = best.decrease / total_weight_w();
      std::vector<Sample> left, right;
      for (const auto& s : t.samples) {
        (value(s.row, best.feature) <= best.threshold ? left : right).push_back(s);
      }
      const int li = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      const int ri = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes[static_cast<std::size_t>(t.node)].left = li;
      tree.nodes[static_cast<std::size_t>(t.node)].right = ri;
      // Right pushed first so the left subtree is expanded first.
      stack.push_back({ri, std::move(right), t.depth + 1});
      stack.push_back({li, std::move(left), t.depth + 1});
    }
    return tree;
  }

 private:
  struct Split {
    bool found = false;
    int feature = -1;
    double threshold = 0;
    double decrease = 0;  // n_w * imp - n_l * imp_l - n_r * imp_r
  };

  double value(std::size_t row, int feature) const {
    return xs_[row].values[static_cast<std::size_t>(feature)];
  }

  // Root weight under class weighting, for normalising decreases.
  double total_weight_w() const { return root_weighted_ > 0 ? root_weighted_ : 1; }

  Split find_split(const std::vector<Sample>& samples, const std::vector<double>& w, double n_w,
                   double imp) {
    if (root_weighted_ == 0) root_weighted_ = n_w;
    const int max_features = p_.max_features > 0
                                 ? p_.max_features
                                 : static_cast<int>(std::lround(std::sqrt(double(kFeatureCount))));
    std::vector<int> order = active_;
    Split best;
    int examined = 0;
    std::vector<std::pair<double, std::size_t>> col(samples.size());
    for (std::size_t i = 0; i < order.size() && examined < max_features; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng_)]);
      const int f = order[i];
      for (std::size_t j = 0; j < samples.size(); ++j) col[j] = {value(samples[j].row, f), j};
      std::sort(col.begin(), col.end());
      if (col.front().first == col.back().first) continue;  // constant here; draw another
      ++examined;

      std::vector<double> lw(static_cast<std::size_t>(k_), 0.0);
      double l_n = 0;
      std::size_t l_rows = 0;
      std::size_t total_rows = 0;
      for (const auto& s : samples) total_rows += static_cast<std::size_t>(s.weight);
      for (std::size_t j = 0; j + 1 < col.size(); ++j) {
        const Sample& s = samples[col[j].second];
        const auto y = static_cast<std::size_t>(ys_[s.row]);
        const double sw = s.weight * class_weight_[y];
        lw[y] += sw;
        l_n += sw;
        l_rows += static_cast<std::size_t>(s.weight);
        if (col[j].first == col[j + 1].first) continue;
        const std::size_t r_rows = total_rows - l_rows;
        if (l_rows < static_cast<std::size_t>(p_.min_samples_leaf) ||
            r_rows < static_cast<std::size_t>(p_.min_samples_leaf)) {
          continue;
        }
        std::vector<double> rw(w);
        for (std::size_t c = 0; c < rw.size(); ++c) rw[c] -= lw[c];
        const double r_n = n_w - l_n;
        const double dec =
            n_w * imp - l_n * impurity(lw, l_n, p_.criterion) - r_n * impurity(rw, r_n, p_.criterion);
        if (!best.found || dec > best.decrease + 1e-12) {
          double thr = col[j].first + (col[j + 1].first - col[j].first) / 2;
          if (!(thr < col[j + 1].first)) thr = col[j].first;
          best = {true, f, thr, dec};
        }
      }
    }
    if (best.found && best.decrease <= 0) best.found = false;
    return best;
  }

  std::span<const FeatureVector> xs_;
  std::span<const int> ys_;
  int k_;
  const std::vector<double>& class_weight_;
  const std::vector<int>& active_;
  const ForestParams& p_;
  std::mt19937_64 rng_;
  double root_weighted_ = 0;
};

std::string bits_string(const FeatureBits& bits) {
  std::string s(kFeatureCount, '0');
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (bits[i]) s[i] = '1';
  }
  return s;
}

FeatureBits bits_from_string(const std::string& s) {
  if (s.size() != kFeatureCount) throw FormatError("feature mask must have 102 entries");
  FeatureBits b;
  for (std::size_t i = 0; i < kFeatureCount; ++i) b[i] = s[i] == '1';
  return b;
}

}  // namespace

const std::vector<double>& DecisionTree::leaf_distribution(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                       : n.right);
  }
  return nodes[i].distribution;
}

ModelArtifact train(std::span<const FeatureVector> features, std::span<const int> labels,
                    std::vector<std::string> class_set, Mode mode, const ForestParams& params,
                    std::uint64_t seed) {
  if (features.size() != labels.size()) throw DataError("features and labels differ in length");
  if (class_set.size() < 2) throw DegenerateData("need at least two classes");
  if (params.n_trees < 1) throw ConfigError("n_trees must be positive");
  std::vector<std::size_t> class_count(class_set.size(), 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= class_set.size()) {
      throw DataError("label index out of range");
    }
    ++class_count[static_cast<std::size_t>(y)];
  }
  if (std::count_if(class_count.begin(), class_count.end(), [](auto c) { return c > 0; }) < 2) {
    throw DegenerateData("training data contains fewer than two classes");
  }
  for (const auto& v : features) {
    if (v.mask != mode) {
      throw MaskMismatch("feature vector built under " + std::string(to_string(v.mask)) +
                         " mask, model mode is " + std::string(to_string(mode)));
    }
  }

  const FeatureBits mask = mode_mask(mode);
  std::vector<int> active;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (mask[i]) active.push_back(static_cast<int>(i));
  }
  std::vector<double> class_weight(class_set.size(), 1.0);
  if (params.balanced_class_weight) {
    const double n = static_cast<double>(labels.size());
    for (std::size_t c = 0; c < class_set.size(); ++c) {
      if (class_count[c] > 0) {
        class_weight[c] = n / (static_cast<double>(class_set.size()) * double(class_count[c]));
      }
    }
  }

  ModelArtifact model;
  model.mode = mode;
  model.feature_mask = mask;
  model.class_set = std::move(class_set);
  model.params = params;
  model.training_meta.seed = seed;
  model.training_meta.n_samples = features.size();
  model.trees.resize(static_cast<std::size_t>(params.n_trees));

  const int k = static_cast<int>(model.class_set.size());
  auto build_one = [&](std::size_t t) {
    const std::uint64_t tree_seed = splitmix64(seed ^ splitmix64(t + 1));
    std::mt19937_64 rng(tree_seed);
    std::vector<double> counts(features.size(), params.bootstrap ? 0.0 : 1.0);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, features.size() - 1);
      for (std::size_t i = 0; i < features.size(); ++i) counts[pick(rng)] += 1;
    }
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] > 0) samples.push_back({i, counts[i]});
    }
    TreeBuilder b(features, labels, k, class_weight, active, params, rng());
    model.trees[t] = b.build(std::move(samples));
  };

  unsigned threads = params.threads > 0 ? static_cast<unsigned>(params.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(params.n_trees));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < threads; ++i) {
    pool.emplace_back([&] {
      for (std::size_t t = next++; t < model.trees.size(); t = next++) build_one(t);
    });
  }
  for (auto& th : pool) th.join();
  return model;
}

Prediction predict(const ModelArtifact& model, const FeatureVector& v) {
  Prediction p;
  p.scores.assign(model.class_set.size(), 0.0);
  const std::span<const double> x(v.values.data(), v.values.size());
  for (const auto& t : model.trees) {
    const auto& d = t.leaf_distribution(x);
    for (std::size_t c = 0; c < p.scores.size() && c < d.size(); ++c) p.scores[c] += d[c];
  }
  const double n = static_cast<double>(std::max<std::size_t>(model.trees.size(), 1));
  for (auto& s : p.scores) s /= n;
  p.label = static_cast<int>(std::max_element(p.scores.begin(), p.scores.end()) - p.scores.begin());
  return p;
}

std::vector<Prediction> predict_batch(const ModelArtifact& model,
                                      std::span<const FeatureVector> vs) {
  std::vector<Prediction> out(vs.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                           static_cast<unsigned>(vs.size() / 256 + 1)));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < threads; ++i) {
    pool.emplace_back([&] {
      for (std::size_t j = next++; j < vs.size(); j = next++) out[j] = predict(model, vs[j]);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

std::vector<double> impurity_importances(const ModelArtifact& model) {
  std::vector<double> total(kFeatureCount, 0.0);
  for (const auto& t : model.trees) {
    std::vector<double> per(kFeatureCount, 0.0);
    double sum = 0;
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) continue;
      per[static_cast<std::size_t>(n.feature)] += n.weighted_impurity_decrease;
      sum += n.weighted_impurity_decrease;
    }
    if (sum <= 0) continue;
    for (std::size_t i = 0; i < kFeatureCount; ++i) total[i] += per[i] / sum;
  }
  const double s = std::accumulate(total.begin(), total.end(), 0.0);
  if (s > 0) {
    for (auto& x : total) x /= s;
  }
  return total;
}

std::size_t count_masked_splits(const ModelArtifact& model) {
  std::size_t n = 0;
  for (const auto& t : model.trees) {
    for (const auto& node : t.nodes) {
      if (!node.is_leaf() && !model.feature_mask[static_cast<std::size_t>(node.feature)]) ++n;
    }
  }
  return n;
}

json to_json(const ModelArtifact& model) {
  json trees = json::array();
  for (const auto& t : model.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"leaf", n.distribution}});
      } else {
        nodes.push_back({{"f", n.feature},
                         {"t", n.threshold},
                         {"l", n.left},
                         {"r", n.right},
                         {"d", n.weighted_impurity_decrease}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  const auto& p = model.params;
  return {{"format", "ctxflow.model"},
          {"version", kModelFormatVersion},
          {"mode", to_string(model.mode)},
          {"class_set", model.class_set},
          {"feature_mask", bits_string(model.feature_mask)},
          {"mask_table", mask_table_json()},
          {"params",
           {{"n_trees", p.n_trees},
            {"max_depth", p.max_depth},
            {"max_features", p.max_features},
            {"min_samples_split", p.min_samples_split},
            {"min_samples_leaf", p.min_samples_leaf},
            {"criterion", p.criterion == Criterion::Gini ? "gini" : "entropy"},
            {"bootstrap", p.bootstrap},
            {"balanced_class_weight", p.balanced_class_weight}}},
          {"training_meta",
           {{"seed", model.training_meta.seed},
            {"dataset_hash", model.training_meta.dataset_hash},
            {"config_hash", model.training_meta.config_hash},
            {"created", model.training_meta.created},
            {"n_samples", model.training_meta.n_samples}}},
          {"trees", trees}};
}

ModelArtifact model_from_json(const json& j) {
  try {
    if (j.value("format", "") != "ctxflow.model") throw FormatError("not a ctxflow model file");
    if (j.value("version", 0) > kModelFormatVersion) throw FormatError("model version too new");
    ModelArtifact m;
    m.mode = parse_mode(j.at("mode").get<std::string>());
    m.class_set = j.at("class_set").get<std::vector<std::string>>();
    m.feature_mask = bits_from_string(j.at("feature_mask").get<std::string>());
    const json& p = j.at("params");
    m.params.n_trees = p.value("n_trees", 100);
    m.params.max_depth = p.value("max_depth", 0);
    m.params.max_features = p.value("max_features", 0);
    m.params.min_samples_split = p.value("min_samples_split", 2);
    m.params.min_samples_leaf = p.value("min_samples_leaf", 1);
    m.params.criterion = p.value("criterion", "gini") == "entropy" ? Criterion::Entropy : Criterion::Gini;
    m.params.bootstrap = p.value("bootstrap", true);
    m.params.balanced_class_weight = p.value("balanced_class_weight", false);
    const json& meta = j.at("training_meta");
    m.training_meta.seed = meta.value("seed", std::uint64_t{0});
    m.training_meta.dataset_hash = meta.value("dataset_hash", "");
    m.training_meta.config_hash = meta.value("config_hash", "");
    m.training_meta.created = meta.value("created", "");
    m.training_meta.n_samples = meta.value("n_samples", std::size_t{0});
    for (const auto& tj : j.at("trees")) {
      DecisionTree t;
      for (const auto& nj : tj) {
        TreeNode n;
        if (nj.contains("leaf")) {
          n.distribution = nj["leaf"].get<std::vector<double>>();
        } else {
          n.feature = nj.at("f").get<int>();
          n.threshold = nj.at("t").get<double>();
          n.left = nj.at("l").get<int>();
          n.right = nj.at("r").get<int>();
          n.weighted_impurity_decrease = nj.value("d", 0.0);
          if (n.feature < 0 || n.feature >= static_cast<int>(kFeatureCount)) {
            throw FormatError("split feature out of range");
          }
        }
        t.nodes.push_back(std::move(n));
      }
      const int size = static_cast<int>(t.nodes.size());
      for (const auto& n : t.nodes) {
        if (!n.is_leaf() && (n.left <= 0 || n.left >= size || n.right <= 0 || n.right >= size)) {
          throw FormatError("tree child index out of range");
        }
      }
      if (t.nodes.empty()) throw FormatError("empty tree");
      m.trees.push_back(std::move(t));
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
}

void save_model(const ModelArtifact& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(model).dump() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

ModelArtifact load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace ctxflow
