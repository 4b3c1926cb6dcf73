#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "ctxflow/evaluation.hpp"

using namespace ctxflow;

namespace {

// Expands a binary confusion matrix into truth/prediction vectors
// (0 = malicious, 1 = legitimate).
void expand(int tp, int fn, int fp, int tn, std::vector<int>& truth, std::vector<int>& pred) {
  auto push = [&](int n, int t, int p) {
    for (int i = 0; i < n; ++i) {
      truth.push_back(t);
      pred.push_back(p);
    }
  };
  push(tp, 0, 0);
  push(fn, 0, 1);
  push(fp, 1, 0);
  push(tn, 1, 1);
}

}  // namespace

TEST(Metrics, FixedConfusionMatrix) {
  std::vector<int> truth, pred;
  expand(9, 1, 2, 88, truth, pred);
  const EvalReport r = evaluate_predictions({"malicious", "legitimate"}, truth, pred, 1);
  EXPECT_NEAR(r.per_class[0].precision, 0.818, 0.001);
  EXPECT_DOUBLE_EQ(r.per_class[0].recall, 0.9);
  EXPECT_NEAR(r.fpr, 0.0222, 0.0001);
  const double f1_mal = 2.0 * 9 / (2 * 9 + 2 + 1);
  const double f1_leg = 2.0 * 88 / (2 * 88 + 1 + 2);
  EXPECT_NEAR(r.per_class[0].f1, f1_mal, 1e-12);
  EXPECT_NEAR(r.per_class[1].f1, f1_leg, 1e-12);
  EXPECT_NEAR(r.macro_f1, (f1_mal + f1_leg) / 2, 1e-12);
  EXPECT_NEAR(r.weighted_f1, (10 * f1_mal + 90 * f1_leg) / 100, 1e-12);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.97);
  EXPECT_EQ(r.confusion, (std::vector<std::vector<std::int64_t>>{{9, 1}, {2, 88}}));

  const EvalReport b = evaluate_binary_counts(9, 1, 2, 88);
  EXPECT_DOUBLE_EQ(b.macro_f1, r.macro_f1);
  EXPECT_DOUBLE_EQ(b.fpr, r.fpr);
}

TEST(Metrics, PerfectAndAllLegit) {
  std::vector<int> truth, pred;
  expand(5, 0, 0, 5, truth, pred);
  const EvalReport p = evaluate_predictions({"m", "legitimate"}, truth, pred, 1);
  EXPECT_EQ(p.macro_f1, 1);
  EXPECT_EQ(p.fpr, 0);

  // Predicting everything legitimate: zero malicious recall, no NaN.
  std::vector<int> all_legit(truth.size(), 1);
  const EvalReport z = evaluate_predictions({"m", "legitimate"}, truth, all_legit, 1);
  EXPECT_EQ(z.per_class[0].recall, 0);
  EXPECT_EQ(z.per_class[0].precision, 0);
  EXPECT_EQ(z.fpr, 0);
  EXPECT_FALSE(std::isnan(z.macro_f1));
}

TEST(Metrics, MacroIsUnweightedMeanOverClasses) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> t, p;
    for (int i = 0; i < 60; ++i) {
      t.push_back(static_cast<int>(rng() % 3));
      p.push_back(static_cast<int>(rng() % 3));
    }
    const EvalReport r = evaluate_predictions({"apt", "botnet", "legitimate"}, t, p, 2);
    double mf = 0, wf = 0;
    std::int64_t n = 0;
    for (const auto& c : r.per_class) {
      mf += c.f1;
      wf += c.f1 * static_cast<double>(c.support);
      n += c.support;
    }
    EXPECT_NEAR(r.macro_f1, mf / 3, 1e-12);
    EXPECT_NEAR(r.weighted_f1, wf / static_cast<double>(n), 1e-12);
    // FPR: legitimate samples predicted as any attack class.
    double fp = 0, neg = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] == 2) {
        neg += 1;
        fp += p[i] != 2;
      }
    }
    EXPECT_NEAR(r.fpr, fp / neg, 1e-12);
  }
}

TEST(Metrics, AverageReports) {
  std::vector<int> t1, p1, t2, p2;
  expand(9, 1, 2, 88, t1, p1);
  expand(10, 0, 0, 90, t2, p2);
  const std::vector<EvalReport> rs = {evaluate_predictions({"m", "legitimate"}, t1, p1, 1),
                                      evaluate_predictions({"m", "legitimate"}, t2, p2, 1)};
  const EvalReport avg = average_reports(rs);
  EXPECT_NEAR(avg.macro_f1, (rs[0].macro_f1 + 1) / 2, 1e-12);
  EXPECT_EQ(avg.confusion[0][0], 19);
  EXPECT_EQ(to_json(avg)["macro"]["f1"], avg.macro_f1);
}

TEST(GroupSplit, GroupsNeverStraddle) {
  std::mt19937_64 rng(11);
  std::vector<std::string> groups;
  std::vector<int> labels;
  for (int g = 0; g < 60; ++g) {
    const int label = g % 3;
    for (int i = 0, n = 1 + static_cast<int>(rng() % 8); i < n; ++i) {
      groups.push_back("cap" + std::to_string(g));
      labels.push_back(label);
    }
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SplitIndices s = group_split(groups, labels, 0.3, seed);
    EXPECT_EQ(s.train.size() + s.test.size(), groups.size());
    std::set<std::string> tr, te;
    for (auto i : s.train) tr.insert(groups[i]);
    for (auto i : s.test) te.insert(groups[i]);
    for (const auto& g : te) EXPECT_FALSE(tr.count(g)) << g;
    // Each class sends about 30% of its 20 groups to test.
    std::map<int, std::set<std::string>> test_groups;
    for (auto i : s.test) test_groups[labels[i]].insert(groups[i]);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(test_groups[c].size(), 6u);
    EXPECT_EQ(group_split(groups, labels, 0.3, seed).test, s.test);
  }
}

TEST(Importance, InformationGainFindsSignal) {
  std::vector<FeatureVector> xs;
  std::vector<int> ys;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    FeatureVector v;
    const int y = i % 2;
    v.set(5, y + 0.1 * std::uniform_real_distribution<double>(0, 1)(rng));
    v.set(6, std::uniform_real_distribution<double>(0, 1)(rng));
    xs.push_back(v);
    ys.push_back(y);
  }
  const auto ig = information_gain(xs, ys, 2);
  EXPECT_NEAR(ig[4], 1.0, 1e-9);
  EXPECT_LT(ig[5], 0.2);
}

TEST(Correlation, PearsonAndMatrix) {
  const std::vector<double> a = {1, 2, 3, 4}, b = {2, 4, 6, 8}, c = {4, 3, 2, 1};
  EXPECT_NEAR(pearson(a, b), 1, 1e-12);
  EXPECT_NEAR(pearson(a, c), -1, 1e-12);
  std::vector<FeatureVector> xs(4);
  for (int i = 0; i < 4; ++i) xs[static_cast<std::size_t>(i)].set(1, a[static_cast<std::size_t>(i)]);
  const auto m = correlate(xs, {"ind"}, {c});
  EXPECT_NEAR(m.values[0][0], -1, 1e-12);
}
