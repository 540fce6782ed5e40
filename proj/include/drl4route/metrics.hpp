#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "drl4route/core.hpp"
#include "drl4route/errors.hpp"

namespace drl4route::metrics {

namespace detail {

inline std::size_t max_id(std::span<const TaskId> a, std::span<const TaskId> b) {
  TaskId hi = 0;
  for (TaskId v : a) hi = std::max(hi, v);
  for (TaskId v : b) hi = std::max(hi, v);
  return static_cast<std::size_t>(std::max(hi, 0));
}

// Positions in pred for every label id; throws if one is missing.
inline std::vector<std::size_t> pred_positions_of_label(std::span<const TaskId> pred,
                                                        std::span<const TaskId> label) {
  const auto pos = position_table(pred, max_id(pred, label));
  std::vector<std::size_t> out;
  out.reserve(label.size());
  for (TaskId id : label) {
    if (id < 1 || pos[static_cast<std::size_t>(id)] == 0)
      throw InputError("label id " + std::to_string(id) + " missing from prediction");
    out.push_back(pos[static_cast<std::size_t>(id)]);
  }
  return out;
}

}  // namespace detail

// Kendall-style rank correlation where every in-label task ranks ahead of
// every out-of-label task. Pairs of two out-of-label tasks are not compared.
// Returns nullopt when no pair is comparable.
inline std::optional<double> pairwise_rank_correlation(std::span<const TaskId> pred,
                                                       std::span<const TaskId> label) {
  const std::size_t hi = detail::max_id(pred, label);
  const auto label_pos = position_table(label, hi);
  (void)detail::pred_positions_of_label(pred, label);

  // Rank of each pred item under the label ordering; out-of-label items tie at m+1.
  const std::size_t m = label.size();
  std::vector<std::size_t> rank(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::size_t p = pred[i] >= 1 ? label_pos[static_cast<std::size_t>(pred[i])] : 0;
    rank[i] = p == 0 ? m + 1 : p;
  }

  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      if (rank[i] > m && rank[j] > m) continue;
      // i precedes j in pred; concordant when it also precedes in the label order.
      if (rank[i] < rank[j]) ++concordant; else ++discordant;
    }
  }
  if (concordant + discordant == 0) return std::nullopt;
  return static_cast<double>(concordant - discordant) / static_cast<double>(concordant + discordant);
}

inline std::size_t levenshtein(std::span<const TaskId> a, std::span<const TaskId> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Edit distance between the label and the first m predicted tasks.
inline std::size_t edit_distance(std::span<const TaskId> pred, std::span<const TaskId> label) {
  (void)detail::pred_positions_of_label(pred, label);
  return levenshtein(label, pred.first(std::min(label.size(), pred.size())));
}

struct Deviation {
  double lsd = 0.0;
  double lmd = 0.0;
};

inline Deviation location_deviation(std::span<const TaskId> pred, std::span<const TaskId> label) {
  const auto pred_pos = detail::pred_positions_of_label(pred, label);
  Deviation d;
  if (label.empty()) return d;
  for (std::size_t i = 0; i < label.size(); ++i) {
    const double diff = static_cast<double>(i + 1) - static_cast<double>(pred_pos[i]);
    d.lsd += diff * diff;
    d.lmd += std::abs(diff);
  }
  d.lsd /= static_cast<double>(label.size());
  d.lmd /= static_cast<double>(label.size());
  return d;
}

struct TopK {
  double hr = 0.0;
  double acc = 0.0;
};

// nullopt when k exceeds the label length (sample skipped for this k).
inline std::optional<TopK> topk_scores(std::span<const TaskId> pred, std::span<const TaskId> label,
                                       std::size_t k) {
  if (k == 0) throw InputError("k must be positive");
  if (k > label.size() || k > pred.size()) return std::nullopt;
  std::size_t hits = 0;
  bool exact = true;
  for (std::size_t i = 0; i < k; ++i) {
    if (std::find(label.begin(), label.begin() + static_cast<std::ptrdiff_t>(k), pred[i]) !=
        label.begin() + static_cast<std::ptrdiff_t>(k))
      ++hits;
    if (pred[i] != label[i]) exact = false;
  }
  return TopK{static_cast<double>(hits) / static_cast<double>(k), exact ? 1.0 : 0.0};
}

struct SampleMetrics {
  std::size_t n = 0;
  std::optional<double> hr1;
  std::optional<double> acc3;
  std::optional<double> krc;
  double lmd = 0.0;
  double lsd = 0.0;
  double ed = 0.0;
};

inline SampleMetrics score_sample(std::span<const TaskId> pred, std::span<const TaskId> label) {
  SampleMetrics s;
  s.n = pred.size();
  if (auto t = topk_scores(pred, label, 1)) s.hr1 = t->hr;
  if (auto t = topk_scores(pred, label, 3)) s.acc3 = t->acc;
  s.krc = pairwise_rank_correlation(pred, label);
  const auto dev = location_deviation(pred, label);
  s.lsd = dev.lsd;
  s.lmd = dev.lmd;
  s.ed = static_cast<double>(edit_distance(pred, label));
  return s;
}

// Samples with n in (0, max_n].
struct Bucket {
  std::size_t max_n = 25;
  bool contains(std::size_t n) const { return n > 0 && n <= max_n; }
  std::string name() const { return "(0," + std::to_string(max_n) + "]"; }
};

inline constexpr Bucket kShortBucket{11};
inline constexpr Bucket kFullBucket{25};

struct MetricReport {
  Bucket bucket;
  std::size_t count = 0;
  double hr1 = std::numeric_limits<double>::quiet_NaN();
  double acc3 = std::numeric_limits<double>::quiet_NaN();
  double krc = std::numeric_limits<double>::quiet_NaN();
  double lmd = std::numeric_limits<double>::quiet_NaN();
  double lsd = std::numeric_limits<double>::quiet_NaN();
  double ed = std::numeric_limits<double>::quiet_NaN();
  std::size_t skipped_hr1 = 0;
  std::size_t skipped_acc3 = 0;
  std::size_t skipped_krc = 0;
  std::vector<SampleMetrics> per_sample;

  static std::string csv_header() { return "bucket,hr1,acc3,krc,lmd,lsd,ed,count"; }

  std::string csv_row() const {
    std::ostringstream os;
    os << bucket.max_n << ',' << fmt(hr1) << ',' << fmt(acc3) << ',' << fmt(krc) << ','
       << fmt(lmd) << ',' << fmt(lsd) << ',' << fmt(ed) << ',' << count;
    return os.str();
  }

  std::string to_kv() const {
    std::ostringstream os;
    os << "bucket=" << bucket.name() << '\n'
       << "count=" << count << '\n'
       << "hr1=" << fmt(hr1) << '\n'
       << "acc3=" << fmt(acc3) << '\n'
       << "krc=" << fmt(krc) << '\n'
       << "lmd=" << fmt(lmd) << '\n'
       << "lsd=" << fmt(lsd) << '\n'
       << "ed=" << fmt(ed) << '\n'
       << "skipped_hr1=" << skipped_hr1 << '\n'
       << "skipped_acc3=" << skipped_acc3 << '\n'
       << "skipped_krc=" << skipped_krc << '\n';
    return os.str();
  }

 private:
  static std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
  }
};

inline MetricReport evaluate_dataset(std::span<const Sample> samples,
                                     std::span<const RoutePermutation> preds, Bucket bucket) {
  if (samples.size() != preds.size())
    throw InputError("samples and predictions differ in length");

  MetricReport r;
  r.bucket = bucket;
  double hr1 = 0, acc3 = 0, krc = 0, lmd = 0, lsd = 0, ed = 0;
  std::size_t n_hr1 = 0, n_acc3 = 0, n_krc = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!bucket.contains(samples[i].n())) continue;
    if (preds[i].size() != samples[i].n())
      throw InputError("prediction " + std::to_string(i) + " does not cover its sample");
    auto s = score_sample(preds[i].order, samples[i].label.order);
    if (s.hr1) { hr1 += *s.hr1; ++n_hr1; } else { ++r.skipped_hr1; }
    if (s.acc3) { acc3 += *s.acc3; ++n_acc3; } else { ++r.skipped_acc3; }
    if (s.krc) { krc += *s.krc; ++n_krc; } else { ++r.skipped_krc; }
    lmd += s.lmd;
    lsd += s.lsd;
    ed += s.ed;
    r.per_sample.push_back(s);
  }
  r.count = r.per_sample.size();
  const auto mean = [](double sum, std::size_t k) {
    return k == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(k);
  };
  r.hr1 = mean(hr1, n_hr1);
  r.acc3 = mean(acc3, n_acc3);
  r.krc = mean(krc, n_krc);
  r.lmd = mean(lmd, r.count);
  r.lsd = mean(lsd, r.count);
  r.ed = mean(ed, r.count);
  return r;
}

}  // namespace drl4route::metrics
