#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "drl4route/metrics.hpp"
#include "oracles.hpp"

using namespace drl4route;
using namespace drl4route::metrics;
using Ids = std::vector<TaskId>;

namespace {

struct Instance {
  Ids pred;
  Ids label;
};

Instance random_instance(std::mt19937_64& rng, int max_n) {
  const int n = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_n));
  Ids pred(static_cast<std::size_t>(n));
  std::iota(pred.begin(), pred.end(), 1);
  std::shuffle(pred.begin(), pred.end(), rng);
  Ids label = pred;
  std::shuffle(label.begin(), label.end(), rng);
  label.resize(1 + rng() % static_cast<unsigned>(n));
  return {pred, label};
}

Sample sample_with_label(std::size_t n, Ids label) {
  Sample s;
  for (std::size_t i = 0; i < n; ++i) s.tasks.push_back(Task{static_cast<TaskId>(i + 1)});
  s.label.order = std::move(label);
  return s;
}

}  // namespace

TEST(Krc, Examples) {
  EXPECT_DOUBLE_EQ(*pairwise_rank_correlation(Ids{1, 2, 3}, Ids{1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(*pairwise_rank_correlation(Ids{3, 2, 1}, Ids{1, 2, 3}), -1.0);
  EXPECT_NEAR(*pairwise_rank_correlation(Ids{2, 1, 3, 4}, Ids{2, 3, 1}), 4.0 / 6.0, 1e-12);
  EXPECT_NEAR(*oracle::krc({2, 1, 3, 4}, {2, 3, 1}), 4.0 / 6.0, 1e-12);
}

TEST(Krc, UndefinedWithoutPairs) {
  EXPECT_FALSE(pairwise_rank_correlation(Ids{1}, Ids{1}).has_value());
}

TEST(Krc, MissingLabelIdThrows) {
  EXPECT_THROW(pairwise_rank_correlation(Ids{1, 2}, Ids{3}), InputError);
}

TEST(EditDistance, Examples) {
  EXPECT_EQ(edit_distance(Ids{1, 2, 3}, Ids{1, 2, 3}), 0u);
  EXPECT_EQ(edit_distance(Ids{1, 3, 2, 4}, Ids{1, 2, 3}), 2u);
  EXPECT_EQ(edit_distance(Ids{4, 5, 6, 1, 2, 3}, Ids{1, 2, 3}), 3u);
}

TEST(LocationDeviation, Examples) {
  auto d = location_deviation(Ids{1, 2, 3}, Ids{1, 2, 3});
  EXPECT_EQ(d.lsd, 0.0);
  EXPECT_EQ(d.lmd, 0.0);
  d = location_deviation(Ids{2, 1, 3}, Ids{1, 2, 3});
  EXPECT_NEAR(d.lsd, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(d.lmd, 2.0 / 3.0, 1e-12);
  d = location_deviation(Ids{3, 1, 2}, Ids{1, 2, 3});
  EXPECT_NEAR(d.lsd, 2.0, 1e-12);
  EXPECT_NEAR(d.lmd, 4.0 / 3.0, 1e-12);
}

TEST(TopK, Examples) {
  auto t = topk_scores(Ids{1, 2, 3, 4}, Ids{2, 1, 4}, 2);
  ASSERT_TRUE(t);
  EXPECT_EQ(t->hr, 1.0);
  EXPECT_EQ(t->acc, 0.0);
  t = topk_scores(Ids{1, 2, 3}, Ids{1, 2, 3}, 3);
  EXPECT_EQ(t->hr, 1.0);
  EXPECT_EQ(t->acc, 1.0);
  t = topk_scores(Ids{4, 3, 2, 1}, Ids{1, 2}, 1);
  EXPECT_EQ(t->hr, 0.0);
  EXPECT_EQ(t->acc, 0.0);
}

TEST(TopK, ShortLabelIsSkipped) {
  EXPECT_FALSE(topk_scores(Ids{1, 2, 3}, Ids{1, 2}, 3).has_value());
  EXPECT_THROW(topk_scores(Ids{1}, Ids{1}, 0), InputError);
}

TEST(Metrics, MatchOraclesOnRandomInstances) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto [pred, label] = random_instance(rng, 8);
    const auto krc = pairwise_rank_correlation(pred, label);
    const auto want = oracle::krc(pred, label);
    ASSERT_EQ(krc.has_value(), want.has_value());
    if (krc) EXPECT_NEAR(*krc, *want, 1e-12);

    const Ids head(pred.begin(), pred.begin() + static_cast<long>(label.size()));
    EXPECT_EQ(static_cast<int>(edit_distance(pred, label)), oracle::edit_distance(label, head));

    const auto dev = location_deviation(pred, label);
    const auto [lsd, lmd] = oracle::lsd_lmd(pred, label);
    EXPECT_NEAR(dev.lsd, lsd, 1e-12);
    EXPECT_NEAR(dev.lmd, lmd, 1e-12);

    for (std::size_t k = 1; k <= label.size(); ++k) {
      const auto t = topk_scores(pred, label, k);
      const auto [hr, acc] = oracle::hr_acc(pred, label, k);
      ASSERT_TRUE(t);
      EXPECT_NEAR(t->hr, hr, 1e-12);
      EXPECT_EQ(t->acc, acc);
    }
  }
}

TEST(Metrics, RangeInvariants) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto [pred, label] = random_instance(rng, 12);
    if (auto k = pairwise_rank_correlation(pred, label)) {
      EXPECT_GE(*k, -1.0);
      EXPECT_LE(*k, 1.0);
    }
    const auto dev = location_deviation(pred, label);
    EXPECT_GE(dev.lsd, 0.0);
    EXPECT_GE(dev.lmd, 0.0);
    EXPECT_LE(dev.lmd, std::sqrt(dev.lsd) + 1e-12);
    const auto ed = edit_distance(pred, label);
    EXPECT_LE(ed, label.size());
    const auto t1 = topk_scores(pred, label, 1);
    EXPECT_EQ(t1->hr, t1->acc);
  }
}

TEST(Metrics, EditDistanceSymmetric) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_instance(rng, 8).pred;
    const auto b = random_instance(rng, 8).pred;
    EXPECT_EQ(levenshtein(a, b), levenshtein(b, a));
  }
}

TEST(EvaluateDataset, PerfectPredictions) {
  std::vector<Sample> samples{sample_with_label(4, {2, 4, 1, 3}), sample_with_label(3, {3, 1, 2})};
  std::vector<RoutePermutation> preds{{{2, 4, 1, 3}}, {{3, 1, 2}}};
  const auto r = evaluate_dataset(samples, preds, kFullBucket);
  EXPECT_EQ(r.count, 2u);
  EXPECT_EQ(r.krc, 1.0);
  EXPECT_EQ(r.lsd, 0.0);
  EXPECT_EQ(r.lmd, 0.0);
  EXPECT_EQ(r.ed, 0.0);
  EXPECT_EQ(r.hr1, 1.0);
  EXPECT_EQ(r.acc3, 1.0);
}

TEST(EvaluateDataset, BucketFilter) {
  std::vector<Sample> samples{sample_with_label(12, {1})};
  std::vector<RoutePermutation> preds(1);
  preds[0].order.resize(12);
  std::iota(preds[0].order.begin(), preds[0].order.end(), 1);
  const auto r = evaluate_dataset(samples, preds, kShortBucket);
  EXPECT_EQ(r.count, 0u);
  EXPECT_TRUE(std::isnan(r.lsd));
  EXPECT_EQ(evaluate_dataset(samples, preds, kFullBucket).count, 1u);
}

TEST(EvaluateDataset, MeanOfPerSampleValues) {
  std::vector<Sample> samples{sample_with_label(3, {1, 2, 3}), sample_with_label(3, {1, 2, 3})};
  std::vector<RoutePermutation> preds{{{1, 2, 3}}, {{3, 1, 2}}};
  EXPECT_DOUBLE_EQ(evaluate_dataset(samples, preds, kFullBucket).lsd, 1.0);
}

TEST(EvaluateDataset, SkipsAreCounted) {
  std::vector<Sample> samples{sample_with_label(1, {1}), sample_with_label(3, {2, 1})};
  std::vector<RoutePermutation> preds{{{1}}, {{2, 1, 3}}};
  const auto r = evaluate_dataset(samples, preds, kFullBucket);
  EXPECT_EQ(r.skipped_krc, 1u);
  EXPECT_EQ(r.skipped_acc3, 2u);
  EXPECT_EQ(r.skipped_hr1, 0u);
  EXPECT_TRUE(std::isnan(r.acc3));
}

TEST(EvaluateDataset, LengthMismatchThrows) {
  std::vector<Sample> samples{sample_with_label(1, {1})};
  std::vector<RoutePermutation> preds;
  EXPECT_THROW(evaluate_dataset(samples, preds, kFullBucket), InputError);
}

TEST(EvaluateDataset, OrderInvariantAndHrEqualsAcc1) {
  std::mt19937_64 rng(5);
  std::vector<Sample> samples;
  std::vector<RoutePermutation> preds;
  for (int i = 0; i < 60; ++i) {
    auto [pred, label] = random_instance(rng, 10);
    samples.push_back(sample_with_label(pred.size(), label));
    preds.push_back({pred});
  }
  const auto a = evaluate_dataset(samples, preds, kFullBucket);

  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Sample> s2;
  std::vector<RoutePermutation> p2;
  for (auto i : idx) {
    s2.push_back(samples[i]);
    p2.push_back(preds[i]);
  }
  const auto b = evaluate_dataset(s2, p2, kFullBucket);
  EXPECT_NEAR(a.krc, b.krc, 1e-12);
  EXPECT_NEAR(a.lsd, b.lsd, 1e-12);
  EXPECT_NEAR(a.lmd, b.lmd, 1e-12);
  EXPECT_NEAR(a.ed, b.ed, 1e-12);
  EXPECT_NEAR(a.hr1, b.hr1, 1e-12);
  EXPECT_NEAR(a.acc3, b.acc3, 1e-12);

  double acc1 = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    acc1 += topk_scores(preds[i].order, samples[i].label.order, 1)->acc;
  EXPECT_NEAR(a.hr1, acc1 / static_cast<double>(samples.size()), 1e-12);
}

TEST(MetricReport, Serialization) {
  std::vector<Sample> samples{sample_with_label(3, {1, 2, 3})};
  std::vector<RoutePermutation> preds{{{1, 2, 3}}};
  const auto r = evaluate_dataset(samples, preds, kShortBucket);
  EXPECT_EQ(MetricReport::csv_header(), "bucket,hr1,acc3,krc,lmd,lsd,ed,count");
  EXPECT_EQ(r.csv_row(), "11,1.000000,1.000000,1.000000,0.000000,0.000000,0.000000,1");
  EXPECT_NE(r.to_kv().find("bucket=(0,11]\n"), std::string::npos);
  EXPECT_NE(r.to_kv().find("lsd=0.000000\n"), std::string::npos);
}
