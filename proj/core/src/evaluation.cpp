#include "ctxflow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "ctxflow/error.hpp"
#include "ctxflow/stats.hpp"

namespace ctxflow {

using nlohmann::json;

namespace {

EvalReport from_confusion(const std::vector<std::string>& classes,
                          std::vector<std::vector<std::int64_t>> confusion, int negative_class) {
  const std::size_t k = classes.size();
  EvalReport r;
  r.classes = classes;
  r.per_class.resize(k);
  std::int64_t total = 0, correct = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) total += confusion[i][j];
    correct += confusion[i][i];
  }
  for (std::size_t c = 0; c < k; ++c) {
    std::int64_t predicted = 0, support = 0;
    for (std::size_t i = 0; i < k; ++i) predicted += confusion[i][c];
    for (std::size_t j = 0; j < k; ++j) support += confusion[c][j];
    ClassMetrics& m = r.per_class[c];
    m.support = support;
    m.precision = safe_ratio(double(confusion[c][c]), double(predicted));
    m.recall = safe_ratio(double(confusion[c][c]), double(support));
    m.f1 = safe_ratio(2 * m.precision * m.recall, m.precision + m.recall);
    r.macro_precision += m.precision / double(k);
    r.macro_recall += m.recall / double(k);
    r.macro_f1 += m.f1 / double(k);
    const double w = safe_ratio(double(support), double(total));
    r.weighted_precision += w * m.precision;
    r.weighted_recall += w * m.recall;
    r.weighted_f1 += w * m.f1;
  }
  r.accuracy = safe_ratio(double(correct), double(total));
  if (negative_class >= 0 && static_cast<std::size_t>(negative_class) < k) {
    const auto n = static_cast<std::size_t>(negative_class);
    std::int64_t negatives = 0;
    for (std::size_t j = 0; j < k; ++j) negatives += confusion[n][j];
    r.fpr = safe_ratio(double(negatives - confusion[n][n]), double(negatives));
  }
  r.confusion = std::move(confusion);
  return r;
}

double entropy_bits(const std::vector<double>& counts, double total) {
  if (total <= 0) return 0;
  double h = 0;
  for (double c : counts) {
    if (c > 0) h -= (c / total) * std::log2(c / total);
  }
  return h;
}

}  // namespace

EvalReport evaluate_predictions(const std::vector<std::string>& classes, std::span<const int> truth,
                                std::span<const int> predicted, int negative_class) {
  if (truth.size() != predicted.size()) throw DataError("truth and predictions differ in length");
  const std::size_t k = classes.size();
  std::vector<std::vector<std::int64_t>> confusion(k, std::vector<std::int64_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || predicted[i] < 0 || std::size_t(truth[i]) >= k ||
        std::size_t(predicted[i]) >= k) {
      throw DataError("label index out of range");
    }
    ++confusion[std::size_t(truth[i])][std::size_t(predicted[i])];
  }
  return from_confusion(classes, std::move(confusion), negative_class);
}

EvalReport evaluate_binary_counts(std::int64_t tp, std::int64_t fn, std::int64_t fp,
                                  std::int64_t tn) {
  return from_confusion({"malicious", "legitimate"}, {{tp, fn}, {fp, tn}}, 1);
}

EvalReport evaluate(const ModelArtifact& model, std::span<const FeatureVector> features,
                    std::span<const int> labels) {
  const auto preds = predict_batch(model, features);
  std::vector<int> predicted;
  predicted.reserve(preds.size());
  for (const auto& p : preds) predicted.push_back(p.label);
  int negative = static_cast<int>(model.class_set.size()) - 1;
  for (std::size_t i = 0; i < model.class_set.size(); ++i) {
    if (model.class_set[i] == "legitimate") negative = static_cast<int>(i);
  }
  EvalReport r = evaluate_predictions(model.class_set, labels, predicted, negative);
  r.importances = impurity_importances(model);
  return r;
}

EvalReport average_reports(std::span<const EvalReport> reports) {
  if (reports.empty()) return {};
  EvalReport a;
  a.classes = reports.front().classes;
  const std::size_t k = a.classes.size();
  a.per_class.resize(k);
  a.confusion.assign(k, std::vector<std::int64_t>(k, 0));
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    if (r.classes != a.classes) throw DataError("cannot average reports over different classes");
    for (std::size_t c = 0; c < k; ++c) {
      a.per_class[c].precision += r.per_class[c].precision / n;
      a.per_class[c].recall += r.per_class[c].recall / n;
      a.per_class[c].f1 += r.per_class[c].f1 / n;
      a.per_class[c].support += r.per_class[c].support;
      for (std::size_t j = 0; j < k; ++j) a.confusion[c][j] += r.confusion[c][j];
    }
    a.macro_precision += r.macro_precision / n;
    a.macro_recall += r.macro_recall / n;
    a.macro_f1 += r.macro_f1 / n;
    a.weighted_precision += r.weighted_precision / n;
    a.weighted_recall += r.weighted_recall / n;
    a.weighted_f1 += r.weighted_f1 / n;
    a.fpr += r.fpr / n;
    a.accuracy += r.accuracy / n;
    if (!r.importances.empty()) {
      a.importances.resize(r.importances.size(), 0.0);
      for (std::size_t i = 0; i < r.importances.size(); ++i) a.importances[i] += r.importances[i] / n;
    }
  }
  return a;
}

json to_json(const EvalReport& r) {
  json per = json::object();
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    const auto& m = r.per_class[c];
    per[r.classes[c]] = {{"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"support", m.support}};
  }
  json j = {{"classes", r.classes},
            {"per_class", per},
            {"macro", {{"precision", r.macro_precision}, {"recall", r.macro_recall}, {"f1", r.macro_f1}}},
            {"weighted",
             {{"precision", r.weighted_precision}, {"recall", r.weighted_recall}, {"f1", r.weighted_f1}}},
            {"fpr", r.fpr},
            {"accuracy", r.accuracy},
            {"confusion", r.confusion}};
  if (!r.importances.empty()) j["importances"] = r.importances;
  return j;
}

SplitIndices group_split(std::span<const std::string> groups, std::span<const int> labels,
                         double test_fraction, std::uint64_t seed) {
  if (groups.size() != labels.size()) throw DataError("groups and labels differ in length");
  if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test fraction must be in (0, 1)");
  // Each group is stratified under its most frequent label.
  std::map<std::string, std::map<int, std::size_t>> votes;
  for (std::size_t i = 0; i < groups.size(); ++i) ++votes[groups[i]][labels[i]];
  std::map<int, std::vector<std::string>> by_class;
  for (const auto& [g, v] : votes) {
    int best = v.begin()->first;
    for (const auto& [label, n] : v) {
      if (n > v.at(best)) best = label;
    }
    by_class[best].push_back(g);
  }
  std::mt19937_64 rng(seed);
  std::set<std::string> test_groups;
  for (auto& [label, gs] : by_class) {
    std::shuffle(gs.begin(), gs.end(), rng);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * double(gs.size())));
    if (gs.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, gs.size() - 1);
    for (std::size_t i = 0; i < n_test; ++i) test_groups.insert(gs[i]);
  }
  SplitIndices s;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    (test_groups.contains(groups[i]) ? s.test : s.train).push_back(i);
  }
  return s;
}

std::vector<double> information_gain(std::span<const FeatureVector> features,
                                     std::span<const int> labels, int n_classes) {
  std::vector<double> gains(kFeatureCount, 0.0);
  const std::size_t n = features.size();
  if (n == 0 || n_classes < 1) return gains;
  std::vector<double> all(static_cast<std::size_t>(n_classes), 0.0);
  for (int y : labels) all[static_cast<std::size_t>(y)] += 1;
  const double h = entropy_bits(all, double(n));
  std::vector<std::pair<double, int>> col(n);
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    for (std::size_t i = 0; i < n; ++i) col[i] = {features[i].values[f], labels[i]};
    std::sort(col.begin(), col.end());
    std::vector<double> left(all.size(), 0.0);
    double best = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left[static_cast<std::size_t>(col[i].second)] += 1;
      if (col[i].first == col[i + 1].first) continue;
      std::vector<double> right(all);
      for (std::size_t c = 0; c < right.size(); ++c) right[c] -= left[c];
      const double nl = double(i + 1), nr = double(n - i - 1);
      const double cond = (nl * entropy_bits(left, nl) + nr * entropy_bits(right, nr)) / double(n);
      best = std::max(best, h - cond);
    }
    gains[f] = best;
  }
  return gains;
}

std::vector<ImportanceRow> importance_table(const ModelArtifact& model,
                                            std::span<const FeatureVector> features,
                                            std::span<const int> labels) {
  const auto imp = impurity_importances(model);
  const auto ig = information_gain(features, labels, static_cast<int>(model.class_set.size()));
  std::vector<ImportanceRow> rows;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const SlotInfo& s = slot_table()[i];
    const bool active = model.feature_mask[i];
    rows.push_back({s.id, std::string(s.name), imp[i], active ? ig[i] : 0.0});
  }
  return rows;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = std::min(a.size(), b.size());
  if (n < 2) return 0;
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va <= 0 || vb <= 0) return 0;
  return cov / std::sqrt(va * vb);
}

CorrelationMatrix correlate(std::span<const FeatureVector> features,
                            const std::vector<std::string>& indicator_names,
                            const std::vector<std::vector<double>>& indicators) {
  if (indicator_names.size() != indicators.size()) {
    throw DataError("indicator names and columns differ in count");
  }
  CorrelationMatrix m;
  m.indicators = indicator_names;
  m.values.assign(kFeatureCount, std::vector<double>(indicators.size(), 0.0));
  std::vector<double> col(features.size());
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    for (std::size_t i = 0; i < features.size(); ++i) col[i] = features[i].values[f];
    for (std::size_t k = 0; k < indicators.size(); ++k) m.values[f][k] = pearson(col, indicators[k]);
  }
  return m;
}

}  // namespace ctxflow
