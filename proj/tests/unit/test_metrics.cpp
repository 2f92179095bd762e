#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "tsan/errors.hpp"
#include "tsan/metrics/metrics.hpp"

using namespace tsan;
using namespace tsan::metrics;

namespace {

// O(n^2) pairwise oracle: P(score_pos > score_neg) + 0.5 P(tie).
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / static_cast<double>(pairs);
}

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Scores on a coarse grid so ties are common; both classes present.
Instance random_instance(std::mt19937_64& rng) {
  const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 200)(rng);
  Instance inst;
  std::uniform_int_distribution<int> grid(0, 20), coin(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    inst.scores.push_back(grid(rng) / 20.0);
    inst.labels.push_back(coin(rng));
  }
  inst.labels[0] = 1;
  inst.labels[1] = 0;
  return inst;
}

}  // namespace

TEST(Confusion, PerfectClassifier) {
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  const std::vector<int> y{1, 1, 0, 0};
  const Classification c = confusion_and_prf1(s, y, 0.5);
  EXPECT_EQ(c.tp, 2u);
  EXPECT_EQ(c.tn, 2u);
  EXPECT_DOUBLE_EQ(c.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(c.f1, 1.0);
}

TEST(Confusion, FromCountsFormula) {
  const Classification c = from_counts(9, 1, 7, 3);
  EXPECT_DOUBLE_EQ(c.precision, 0.9);
  EXPECT_DOUBLE_EQ(c.recall, 0.75);
  EXPECT_NEAR(c.f1, 2 * 0.9 * 0.75 / 1.65, 1e-12);
  EXPECT_NEAR(c.f1, 0.8182, 1e-4);
  EXPECT_DOUBLE_EQ(c.accuracy, 16.0 / 20.0);
  EXPECT_EQ(c.total(), 20u);
}

TEST(Confusion, DegenerateDenominatorsAreFlagged) {
  const std::vector<double> s{0.1, 0.2, 0.3};
  const std::vector<int> y{1, 1, 0};
  const Classification c = confusion_and_prf1(s, y, 0.5);
  EXPECT_EQ(c.precision, 0.0);
  EXPECT_TRUE(c.precision_undefined);
  EXPECT_EQ(c.recall, 0.0);
  EXPECT_FALSE(c.recall_undefined);
  EXPECT_EQ(c.f1, 0.0);
  EXPECT_TRUE(from_counts(0, 0, 5, 0).recall_undefined);
}

TEST(Confusion, StrictThresholdAndContracts) {
  const std::vector<double> s{0.5};
  const std::vector<int> y{1};
  EXPECT_EQ(confusion_and_prf1(s, y, 0.5).fn, 1u);
  EXPECT_THROW(confusion_and_prf1({}, {}, 0.5), ContractError);
  const std::vector<int> two{1, 0};
  EXPECT_THROW(confusion_and_prf1(s, two, 0.5), ContractError);
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 1, 0}).auc, 1.0);
  EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{0.4, 0.4}, std::vector<int>{1, 0}).auc, 0.5);
  EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{0.9, 0.4, 0.6, 0.2}, std::vector<int>{1, 0, 1, 0}).auc, 1.0);
  EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{0.9, 0.6, 0.4, 0.2}, std::vector<int>{1, 0, 1, 0}).auc, 0.75);
  EXPECT_THROW(auc_roc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ContractError);
}

TEST(Auc, EqualsPairwiseOracleExactly) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Instance inst = random_instance(rng);
    EXPECT_EQ(auc_roc(inst.scores, inst.labels).auc, pairwise_auc(inst.scores, inst.labels)) << "trial " << trial;
  }
}

TEST(Auc, InvariantUnderMonotoneTransformAndLabelReversal) {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = random_instance(rng);
    const double auc = auc_roc(inst.scores, inst.labels).auc;
    std::vector<double> transformed;
    for (double s : inst.scores) transformed.push_back(std::exp(3.0 * s) - 7.0);
    EXPECT_NEAR(auc_roc(transformed, inst.labels).auc, auc, 1e-12);
    std::vector<int> flipped;
    for (int y : inst.labels) flipped.push_back(1 - y);
    EXPECT_NEAR(auc_roc(inst.scores, flipped).auc, 1.0 - auc, 1e-12);
  }
}

TEST(Roc, MonotoneFromOriginToOneOne) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = random_instance(rng);
    const RocCurve roc = auc_roc(inst.scores, inst.labels);
    ASSERT_GE(roc.points.size(), 2u);
    EXPECT_EQ(roc.points.front().fpr, 0.0);
    EXPECT_EQ(roc.points.front().tpr, 0.0);
    EXPECT_TRUE(std::isinf(roc.points.front().threshold));
    EXPECT_EQ(roc.points.back().fpr, 1.0);
    EXPECT_EQ(roc.points.back().tpr, 1.0);
    double area = 0.0;
    for (std::size_t k = 1; k < roc.points.size(); ++k) {
      EXPECT_GE(roc.points[k].fpr, roc.points[k - 1].fpr);
      EXPECT_GE(roc.points[k].tpr, roc.points[k - 1].tpr);
      area += (roc.points[k].fpr - roc.points[k - 1].fpr) * (roc.points[k].tpr + roc.points[k - 1].tpr) / 2.0;
    }
    EXPECT_NEAR(area, roc.auc, 1e-12);

    double best = 0.0;
    for (const auto& p : roc.points) best = std::max(best, roc.accuracy_at(p));
    EXPECT_GE(best + 1e-12, confusion_and_prf1(inst.scores, inst.labels, 0.5).accuracy);
  }
}

TEST(Roc, CsvHasHeaderAndOneLinePerPoint) {
  const RocCurve roc = auc_roc(std::vector<double>{0.9, 0.4, 0.6, 0.2}, std::vector<int>{1, 0, 1, 0});
  const auto path = std::filesystem::temp_directory_path() / "tsan_test_roc.csv";
  write_roc_csv(path, roc);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "fpr,tpr");
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, roc.points.size());
  std::filesystem::remove(path);
}

TEST(Report, SingleClassOmitsRoc) {
  const std::vector<double> s{0.9, 0.1};
  const MetricsReport one = evaluate_scores(s, std::vector<int>{1, 1}, 0.5);
  EXPECT_FALSE(one.roc.has_value());
  EXPECT_TRUE(one.to_json().at("auc_roc").is_null());
  const MetricsReport two = evaluate_scores(s, std::vector<int>{1, 0}, 0.5);
  ASSERT_TRUE(two.roc.has_value());
  EXPECT_DOUBLE_EQ(two.to_json().at("auc_roc").get<double>(), 1.0);
}

TEST(Timing, MedianAndReferences) {
  EXPECT_DOUBLE_EQ(median({3.0}), 3.0);
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  Timing t;
  t.repetitions_ms_per_sample = {0.5};
  t.inference_ms_per_sample = 0.5;
  const auto j = t.to_json();
  EXPECT_EQ(j.dump().find("0.83") != std::string::npos, true);
}
